#include "mixsched/gradest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "mixsched/errors.hpp"

namespace mixsched {

void GradEstConfig::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ContractViolation("gradest alpha must lie in (0,1)");
    if (n_runs < 1 || n_rollouts < 1)
        throw ContractViolation("gradest needs at least one run and one rollout");
    if (horizon && *horizon < 1)
        throw ContractViolation("rollout horizon must be at least 1");
    if (!(tail > 0.0))
        throw ContractViolation("tail budget must be positive");
}

int tail_horizon(const NetworkConfig& network, double tail)
{
    if (!network.cap)
        throw ContractViolation("the tail horizon rule needs a truncation cap; set the horizon explicitly");
    const double worst = static_cast<double>(network.n_queues()) * *network.cap;
    if (worst <= 0.0)
        return 1;
    const double gamma = network.discount;
    const double h = std::log(tail * (1.0 - gamma) / worst) / std::log(gamma);
    return std::max(1, static_cast<int>(std::ceil(h)));
}

std::vector<double> sample_unit_sphere(std::size_t dim, RngStream& rng)
{
    if (dim == 0)
        throw ContractViolation("sphere dimension must be at least 1");
    std::vector<double> u(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : u) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm < 1e-300);
    norm = std::sqrt(norm);
    for (double& x : u)
        x /= norm;
    return u;
}

RolloutStreams RolloutStreams::derive(std::uint64_t seed, std::uint64_t call, std::uint64_t run,
                                      std::uint64_t rollout)
{
    return {RngStream(seed, "initial", {call, run, rollout}), RngStream(seed, "arrivals", {call, run, rollout}),
            RngStream(seed, "controller", {call, run, rollout})};
}

double rollout_return(const MixtureParams& params, const ControllerSet& controllers, const RolloutEnv& env,
                      int horizon, RolloutStreams& streams)
{
    if (horizon < 1)
        throw ContractViolation("rollout horizon must be at least 1");
    const auto mixture = softmax(params);
    const double gamma = env.network.discount;
    const auto& rates = env.network.arrival_rates;
    const int cap = env.network.cap.value_or(std::numeric_limits<int>::max());
    QueueState state = env.initial.sample(streams.initial);
    if (state.size() != rates.size())
        throw ContractViolation("initial state does not match the number of queues");

    // In-place form of sample_two_stage + sample_arrivals + step; same draws, no allocation.
    double total = 0.0;
    double weight = 1.0;
    for (int j = 0; j <= horizon; ++j) {
        total += weight * reward(state);
        if (j == horizon)
            break;
        const std::size_t m = sample_index(mixture.probs, streams.sampling.uniform());
        const auto action = controllers[m].sample(state, streams.sampling.uniform());
        for (std::size_t i = 0; i < rates.size(); ++i) {
            int& q = state.lengths[i];
            if (action.served == i && q > 0)
                --q;
            if (streams.arrivals.bernoulli(rates[i]) && q < cap)
                ++q;
        }
        weight *= gamma;
    }
    return total;
}

GradientEstimate sphere_gradient(const MixtureParams& theta, const GradEstConfig& config, const ValueOracle& value,
                                 std::uint64_t call)
{
    config.validate();
    const std::size_t dim = theta.size();
    const auto runs = static_cast<std::size_t>(config.n_runs);

    std::vector<std::vector<double>> directions(runs);
    for (std::size_t i = 0; i < runs; ++i) {
        RngStream rng(config.seed, "perturbation", {call, i});
        directions[i] = sample_unit_sphere(dim, rng);
    }

    GradientEstimate out;
    out.run_values.assign(runs, 0.0);
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < runs; i += stride) {
            MixtureParams perturbed = theta;
            for (std::size_t m = 0; m < dim; ++m)
                perturbed.theta[m] += config.alpha * directions[i][m];
            out.run_values[i] = value(perturbed, i);
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(config.threads, 1, runs);
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work, w, workers);
    }

    if (config.two_point)
        out.baseline = value(theta, runs);

    // Fixed-order reduction keeps the result independent of the thread count.
    out.gradient.assign(dim, 0.0);
    const double scale = static_cast<double>(dim) / config.alpha / static_cast<double>(runs);
    for (std::size_t i = 0; i < runs; ++i) {
        const double v = out.run_values[i] - (config.two_point ? out.baseline : 0.0);
        for (std::size_t m = 0; m < dim; ++m)
            out.gradient[m] += v * directions[i][m];
    }
    for (double& g : out.gradient)
        g *= scale;
    return out;
}

GradientEstimate grad_est(const MixtureParams& theta, const ControllerSet& controllers, const RolloutEnv& env,
                          const GradEstConfig& config, std::uint64_t call)
{
    if (theta.size() != controllers.size())
        throw ContractViolation("parameter length does not match the controller set");
    const int horizon = config.horizon ? *config.horizon : tail_horizon(env.network, config.tail);
    auto oracle = [&](const MixtureParams& perturbed, std::uint64_t run) {
        double sum = 0.0;
        for (int l = 0; l < config.n_rollouts; ++l) {
            auto streams = RolloutStreams::derive(config.seed, call, run, static_cast<std::uint64_t>(l));
            sum += rollout_return(perturbed, controllers, env, horizon, streams);
        }
        return sum / config.n_rollouts;
    };
    return sphere_gradient(theta, config, oracle, call);
}

} // namespace mixsched
