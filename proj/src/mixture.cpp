#include "mixsched/mixture.hpp"

#include <algorithm>
#include <cmath>

#include "mixsched/errors.hpp"

namespace mixsched {

MixtureDistribution softmax(const MixtureParams& params)
{
    if (params.theta.empty())
        throw ContractViolation("softmax of an empty parameter vector");
    for (double t : params.theta) {
        if (!std::isfinite(t))
            throw ContractViolation("softmax parameter is not finite");
    }
    const double shift = *std::max_element(params.theta.begin(), params.theta.end());
    MixtureDistribution out;
    out.probs.reserve(params.size());
    double total = 0.0;
    for (double t : params.theta) {
        out.probs.push_back(std::exp(t - shift));
        total += out.probs.back();
    }
    for (double& p : out.probs)
        p /= total;
    return out;
}

ActionDistribution action_law(const MixtureDistribution& mixture, const ControllerSet& controllers,
                              const QueueState& state)
{
    if (mixture.size() != controllers.size())
        throw ContractViolation("mixture size does not match the controller set");
    ActionDistribution law(action_count(state.size()), 0.0);
    for (std::size_t m = 0; m < controllers.size(); ++m) {
        const auto k = controllers[m].action_distribution(state);
        for (std::size_t a = 0; a < law.size(); ++a)
            law[a] += mixture.probs[m] * k[a];
    }
    return law;
}

ActionDistribution action_law(const MixtureParams& params, const ControllerSet& controllers,
                              const QueueState& state)
{
    return action_law(softmax(params), controllers, state);
}

std::size_t sample_index(std::span<const double> probs, double u)
{
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0)
            continue;
        cumulative += probs[i];
        last_positive = i;
        if (u < cumulative)
            return i;
    }
    // u landed in the rounding slack above the cumulative sum.
    return last_positive;
}

TwoStageDraw sample_two_stage(const MixtureDistribution& mixture, const ControllerSet& controllers,
                              const QueueState& state, RngStream& rng)
{
    if (mixture.size() != controllers.size())
        throw ContractViolation("mixture size does not match the controller set");
    TwoStageDraw draw;
    draw.controller = sample_index(mixture.probs, rng.uniform());
    draw.action = controllers[draw.controller].sample(state, rng.uniform());
    return draw;
}

std::vector<double> score(const MixtureParams& params, const ControllerSet& controllers,
                          const QueueState& state, ServiceAction action)
{
    const auto mixture = softmax(params);
    if (mixture.size() != controllers.size())
        throw ContractViolation("mixture size does not match the controller set");
    const std::size_t a = action.index();
    if (a >= action_count(state.size()))
        throw ContractViolation("action index out of range");

    std::vector<double> k_a(controllers.size());
    double law_a = 0.0;
    for (std::size_t m = 0; m < controllers.size(); ++m) {
        k_a[m] = controllers[m].action_distribution(state)[a];
        law_a += mixture.probs[m] * k_a[m];
    }
    if (law_a <= 0.0)
        throw UndefinedScore("score undefined: the mixture never plays this action in this state");

    std::vector<double> out(controllers.size());
    for (std::size_t m = 0; m < controllers.size(); ++m)
        out[m] = mixture.probs[m] * (k_a[m] - law_a) / law_a;
    return out;
}

} // namespace mixsched
