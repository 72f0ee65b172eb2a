#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mixsched/controllers.hpp"
#include "mixsched/rng.hpp"

namespace mixsched {

// Unconstrained softmax weights, one per base controller.
struct MixtureParams {
    std::vector<double> theta;

    std::size_t size() const { return theta.size(); }
};

// Controller-selection probabilities pi_theta(m).
struct MixtureDistribution {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
};

// Max-subtracted softmax. Throws ContractViolation on an empty or non-finite theta.
MixtureDistribution softmax(const MixtureParams& params);

// pi(a|s) = sum_m pi(m) K_m(s,a).
ActionDistribution action_law(const MixtureDistribution& mixture, const ControllerSet& controllers,
                              const QueueState& state);
ActionDistribution action_law(const MixtureParams& params, const ControllerSet& controllers,
                              const QueueState& state);

struct TwoStageDraw {
    std::size_t controller = 0;
    ServiceAction action;
};

// Draws m ~ pi, then a ~ K_m(state, .), both from `rng`.
TwoStageDraw sample_two_stage(const MixtureDistribution& mixture, const ControllerSet& controllers,
                              const QueueState& state, RngStream& rng);

// grad_theta log pi_theta(a|s); entry m is pi(m) (K_m(s,a) - pi(a|s)) / pi(a|s).
// Throws UndefinedScore when pi(a|s) == 0.
std::vector<double> score(const MixtureParams& params, const ControllerSet& controllers,
                          const QueueState& state, ServiceAction action);

// Inverse-CDF draw from a discrete distribution given u in [0,1).
std::size_t sample_index(std::span<const double> probs, double u);

} // namespace mixsched
