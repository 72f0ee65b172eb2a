#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mixsched/controllers.hpp"
#include "mixsched/mixture.hpp"
#include "mixsched/queue_env.hpp"
#include "mixsched/rng.hpp"

namespace mixsched {

struct GradEstConfig {
    double alpha = 0.1;          // perturbation radius, in (0,1)
    int n_runs = 100;            // sphere directions per estimate
    int n_rollouts = 10;         // rollouts averaged per direction
    std::optional<int> horizon;  // rollout length; unset derives it from `tail`
    double tail = 0.01;          // discounted-tail budget for the derived horizon
    bool two_point = false;      // (V(theta+alpha u) - V(theta)) u instead of V(theta+alpha u) u
    std::uint64_t seed = 0;
    unsigned threads = 1;        // worker threads; results do not depend on it

    void validate() const;
};

// What a rollout simulates: the network (rates, discount, cap) and mu.
struct RolloutEnv {
    NetworkConfig network;
    InitialDistribution initial;
};

// Smallest H with gamma^(H+1) N B / (1-gamma) <= tail, at least 1. Needs a cap.
int tail_horizon(const NetworkConfig& network, double tail);

// Uniform direction on S^{dim-1} by normalizing a Gaussian draw.
std::vector<double> sample_unit_sphere(std::size_t dim, RngStream& rng);

// Independent streams for one trajectory.
struct RolloutStreams {
    RngStream initial;
    RngStream arrivals;
    RngStream sampling;

    static RolloutStreams derive(std::uint64_t seed, std::uint64_t call, std::uint64_t run,
                                 std::uint64_t rollout);
};

// sum_{j=0}^{horizon} gamma^j r_j along one two-stage-sampled trajectory started from mu.
double rollout_return(const MixtureParams& params, const ControllerSet& controllers, const RolloutEnv& env,
                      int horizon, RolloutStreams& streams);

// Value oracle for the generic sphere estimator: returns a (possibly noisy) value of
// `theta`; `run` identifies the perturbation (run == n_runs for the unperturbed baseline).
using ValueOracle = std::function<double(const MixtureParams& theta, std::uint64_t run)>;

struct GradientEstimate {
    std::vector<double> gradient;
    std::vector<double> run_values; // mr(i), one per run
    double baseline = 0.0;          // V(theta) estimate, two-point form only
};

// (M/alpha) * mean_i [V(theta + alpha u_i) (- V(theta))] u_i with u_i drawn from
// stream (seed, "perturbation", call, i).
GradientEstimate sphere_gradient(const MixtureParams& theta, const GradEstConfig& config, const ValueOracle& value,
                                 std::uint64_t call = 0);

// Rollout-driven estimate of grad_theta V^{pi_theta}(mu). `call` separates the
// streams of successive calls that share a seed (the ascent iteration index).
GradientEstimate grad_est(const MixtureParams& theta, const ControllerSet& controllers, const RolloutEnv& env,
                          const GradEstConfig& config, std::uint64_t call = 0);

} // namespace mixsched
