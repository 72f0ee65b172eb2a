#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "mixsched/controllers.hpp"
#include "mixsched/mixture.hpp"
#include "mixsched/queue_env.hpp"

namespace mixsched {

inline constexpr std::size_t kMaxModelStates = 10'000'000;

// The truncated MDP: all (B+1)^N states in mixed-radix order (queue 0 varies
// fastest), a sparse next-state law per (state, action), and rewards.
class TabularModel {
public:
    struct Entry {
        std::size_t next = 0;
        double probability = 0.0;
    };

    const NetworkConfig& config() const { return config_; }
    double discount() const { return config_.discount; }
    std::size_t state_count() const { return states_.size(); }
    std::size_t action_count() const { return n_actions_; }

    const QueueState& state(std::size_t index) const { return states_[index]; }
    std::size_t index_of(const QueueState& state) const;
    const Eigen::VectorXd& rewards() const { return rewards_; }
    const std::vector<Entry>& transitions(std::size_t state, std::size_t action) const
    {
        return kernel_[state * n_actions_ + action];
    }

private:
    friend TabularModel build_model(const NetworkConfig& config);

    NetworkConfig config_;
    std::size_t n_actions_ = 0;
    std::vector<QueueState> states_;
    Eigen::VectorXd rewards_;
    std::vector<std::vector<Entry>> kernel_;
};

// Enumerates the truncated model. Throws ModelSizeError past kMaxModelStates
// and ContractViolation when the config has no cap.
TabularModel build_model(const NetworkConfig& config);

// Row s holds pi(.|s) over dense action indices.
using PolicyMatrix = Eigen::MatrixXd;

PolicyMatrix controller_policy(const TabularModel& model, const Controller& controller);
PolicyMatrix mixture_policy(const TabularModel& model, const std::vector<PolicyMatrix>& base,
                            const MixtureDistribution& mixture);
std::vector<PolicyMatrix> controller_policies(const TabularModel& model, const ControllerSet& controllers);

Eigen::VectorXd uniform_distribution(const TabularModel& model);
Eigen::VectorXd point_mass(const TabularModel& model, const QueueState& state);

struct EvaluationResult {
    Eigen::VectorXd values;     // V(s), negative discounted backlog
    Eigen::MatrixXd q_values;   // Q(s,a)
    Eigen::VectorXd visitation; // d_mu(s)
    double value_residual = 0.0;      // ||V - (r + gamma P V)||_inf
    double visitation_residual = 0.0; // ||d - ((1-gamma) mu + gamma P^T d)||_inf

    double value_at(const Eigen::VectorXd& mu) const { return mu.dot(values); }
};

inline constexpr double kEvaluationTolerance = 1e-10;

// Solves V = r + gamma P_pi V and d = (1-gamma) mu + gamma P_pi^T d by sparse LU
// with iterative refinement. Throws ContractViolation when a policy row or mu is
// not a distribution, SolverError when the residual tolerance cannot be met.
EvaluationResult evaluate_policy(const TabularModel& model, const PolicyMatrix& policy,
                                 const Eigen::VectorXd& mu);

// grad_theta V^{pi_theta}(mu) via the policy gradient theorem:
//   (1/(1-gamma)) sum_s d(s) pi(m) [sum_a K_m(s,a) Q(s,a) - sum_a pi(a|s) Q(s,a)].
std::vector<double> exact_value_gradient(const TabularModel& model, const ControllerSet& controllers,
                                         const MixtureParams& params, const Eigen::VectorXd& mu);

// Same, reusing precomputed base-controller policies; also returns V(mu).
struct GradientAndValue {
    std::vector<double> gradient;
    double value = 0.0;
};
GradientAndValue exact_value_gradient(const TabularModel& model, const std::vector<PolicyMatrix>& base,
                                      const MixtureParams& params, const Eigen::VectorXd& mu);

double mixture_value(const TabularModel& model, const std::vector<PolicyMatrix>& base,
                     const MixtureDistribution& mixture, const Eigen::VectorXd& mu);

struct BestInClass {
    MixtureDistribution mixture; // pi*
    double value = 0.0;          // V^{pi*}(mu)
    MixtureDistribution grid_mixture;
    double grid_value = 0.0;
    std::vector<bool> support;   // pi*(m) > 0
};

// Simplex grid search (M <= 3) at `resolution`, then exact-gradient ascent from
// the best grid point; the better of the two is kept.
BestInClass best_in_class(const TabularModel& model, const ControllerSet& controllers,
                          const Eigen::VectorXd& mu, double resolution = 0.01);

// CSV with one row per state: index, queue lengths, V, Q per action, d.
void write_evaluation_csv(const std::filesystem::path& path, const TabularModel& model,
                          const EvaluationResult& result);

} // namespace mixsched

namespace mixsched {

// Dense vector form of mu on the model's state indexing.
Eigen::VectorXd to_vector(const TabularModel& model, const InitialDistribution& mu);

} // namespace mixsched
