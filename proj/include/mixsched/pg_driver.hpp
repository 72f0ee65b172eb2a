#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixsched/controllers.hpp"
#include "mixsched/exact_solver.hpp"
#include "mixsched/gradest.hpp"
#include "mixsched/mixture.hpp"
#include "mixsched/queue_env.hpp"

namespace mixsched {

enum class GradientSource { Exact, GradEst };

struct PGConfig {
    std::optional<double> learning_rate; // unset: theorem_learning_rate(gamma)
    int iterations = 1000;
    GradientSource source = GradientSource::Exact;
    GradEstConfig gradest;
    std::optional<ArrivalSchedule> schedule; // unset: the network's constant rates
    std::uint64_t seed = 0;
    double initial_theta = 1.0;

    void validate() const;
};

struct TraceRecord {
    long t = 0;
    std::vector<double> theta;        // theta_t, before the update
    std::vector<double> probs;        // softmax(theta_t)
    double value = 0.0;               // V^{pi_theta_t}(mu) under the rates in force at t
    bool value_exact = false;
    double gradient_norm = 0.0;
    std::vector<double> arrival_rates;
    std::vector<double> mean_backlog; // time-averaged online queue lengths up to t
    double wall_ms = 0.0;
};

struct RunTrace {
    std::vector<std::string> controller_tags;
    std::vector<TraceRecord> records;
};

// (1-gamma)^2 / (7 gamma^2 + 4 gamma + 5); throws ContractViolation unless gamma in [0,1).
double theorem_learning_rate(double gamma);

// Softmax policy-gradient ascent from theta = initial_theta * 1. Each iteration also
// advances one online slot (controller draw, action, arrivals) to log the backlog the
// learner actually experiences. Throws SolverError on a non-finite gradient.
RunTrace run_pg(const RolloutEnv& env, const ControllerSet& controllers, const PGConfig& config);

struct BoundRow {
    long t = 0;
    double suboptimality = 0.0; // V* - V_t
    double bound = 0.0;
    bool defined = true;
    bool pass = false;
};

struct BoundReport {
    std::vector<BoundRow> rows;
    MixtureDistribution optimal;
    double optimal_value = 0.0;
    double c = 0.0;
    double visitation_ratio = 0.0;   // ||d_mu^{pi*} / mu||_inf
    double inverse_mu = 0.0;         // ||1/mu||_inf
    double smoothness_factor = 0.0;  // 7 gamma^2 + 4 gamma + 5
    bool all_pass = false;
    std::string notes;
};

// Evaluates V(pi*) - V(pi_theta_t) <= (1/t) M (7g^2+4g+5)/(c^2 (1-g)^3) ||d*/mu||^2 ||1/mu||
// for every record. Needs an exact-valued trace on a constant schedule.
BoundReport check_theorem_bound(const RunTrace& trace, const TabularModel& model, const ControllerSet& controllers,
                                const Eigen::VectorXd& mu, double resolution = 0.01);

struct StabilityReport {
    std::vector<double> mean_backlog; // per queue, time-averaged
    std::vector<double> queue_drift;  // per queue, least-squares slope (packets/slot)
    double total_drift = 0.0;
    double mean_total_backlog = 0.0;
    std::vector<long> total_backlog;  // trajectory, one entry per slot
};

// Simulates the untruncated network under a fixed mixture for `slots` slots.
StabilityReport stability_probe(const MixtureDistribution& policy, const ControllerSet& controllers,
                                const NetworkConfig& network, long slots, const QueueState& initial,
                                std::uint64_t seed);

} // namespace mixsched
