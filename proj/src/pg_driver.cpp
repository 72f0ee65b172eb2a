#include "mixsched/pg_driver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>

#include "mixsched/errors.hpp"

namespace mixsched {

void PGConfig::validate() const
{
    if (iterations < 1)
        throw ContractViolation("policy gradient needs at least one iteration");
    if (learning_rate && !(*learning_rate > 0.0))
        throw ContractViolation("learning rate must be positive");
    if (source == GradientSource::GradEst)
        gradest.validate();
}

double theorem_learning_rate(double gamma)
{
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ContractViolation("discount must lie in [0,1)");
    return (1.0 - gamma) * (1.0 - gamma) / (7.0 * gamma * gamma + 4.0 * gamma + 5.0);
}

namespace {

// Exact machinery for one set of arrival rates.
struct SegmentModel {
    TabularModel model;
    std::vector<PolicyMatrix> base;
    Eigen::VectorXd mu;
};

double norm2(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

} // namespace

RunTrace run_pg(const RolloutEnv& env, const ControllerSet& controllers, const PGConfig& config)
{
    config.validate();
    env.network.validate();
    if (controllers.empty())
        throw ContractViolation("policy gradient needs at least one controller");

    const ArrivalSchedule schedule = config.schedule ? *config.schedule : ArrivalSchedule(env.network.arrival_rates);
    if (schedule.segments().front().rates.size() != env.network.n_queues())
        throw ContractViolation("arrival schedule does not match the number of queues");
    const double eta = config.learning_rate ? *config.learning_rate : theorem_learning_rate(env.network.discount);

    // Models are built lazily per schedule segment; exact values are only
    // available when the network is truncated.
    std::map<std::size_t, std::unique_ptr<SegmentModel>> models;
    auto segment_model = [&](std::size_t segment) -> SegmentModel* {
        if (!env.network.cap)
            return nullptr;
        auto& slot = models[segment];
        if (!slot) {
            NetworkConfig net = env.network;
            net.arrival_rates = schedule.segments()[segment].rates;
            auto model = build_model(net);
            auto base = controller_policies(model, controllers);
            auto mu = to_vector(model, env.initial);
            slot = std::make_unique<SegmentModel>(SegmentModel{std::move(model), std::move(base), std::move(mu)});
        }
        return slot.get();
    };

    RunTrace trace;
    for (const auto& k : controllers)
        trace.controller_tags.push_back(k.tag());
    trace.records.reserve(static_cast<std::size_t>(config.iterations));

    MixtureParams theta{std::vector<double>(controllers.size(), config.initial_theta)};
    RngStream initial_rng(config.seed, "pg-initial");
    RngStream arrival_rng(config.seed, "pg-arrivals");
    RngStream controller_rng(config.seed, "pg-controller");
    QueueState state = env.initial.sample(initial_rng);
    std::vector<double> backlog_sum(env.network.n_queues(), 0.0);

    const auto start = std::chrono::steady_clock::now();
    for (long t = 1; t <= config.iterations; ++t) {
        const std::size_t segment = schedule.segment_at(t - 1);
        RolloutEnv current = env;
        current.network.arrival_rates = schedule.segments()[segment].rates;
        SegmentModel* exact = segment_model(segment);

        TraceRecord record;
        record.t = t;
        record.theta = theta.theta;
        record.probs = softmax(theta).probs;
        record.arrival_rates = current.network.arrival_rates;

        std::vector<double> gradient;
        if (config.source == GradientSource::Exact) {
            if (!exact)
                throw ContractViolation("exact gradients need a truncated network");
            auto gv = exact_value_gradient(exact->model, exact->base, theta, exact->mu);
            gradient = std::move(gv.gradient);
            record.value = gv.value;
            record.value_exact = true;
        } else {
            auto estimate = grad_est(theta, controllers, current, config.gradest, static_cast<std::uint64_t>(t));
            gradient = std::move(estimate.gradient);
            if (exact) {
                record.value = mixture_value(exact->model, exact->base, softmax(theta), exact->mu);
                record.value_exact = true;
            } else if (config.gradest.two_point) {
                record.value = estimate.baseline;
            } else {
                double sum = 0.0;
                for (double v : estimate.run_values)
                    sum += v;
                record.value = sum / static_cast<double>(estimate.run_values.size());
            }
        }
        for (double g : gradient) {
            if (!std::isfinite(g))
                throw SolverError("non-finite gradient at iteration " + std::to_string(t));
        }
        record.gradient_norm = norm2(gradient);

        // One online slot of the learner's own trajectory.
        const auto draw = sample_two_stage(softmax(theta), controllers, state, controller_rng);
        state = step(state, draw.action, sample_arrivals(current.network, arrival_rng), current.network.cap);
        record.mean_backlog.resize(backlog_sum.size());
        for (std::size_t i = 0; i < backlog_sum.size(); ++i) {
            backlog_sum[i] += state.lengths[i];
            record.mean_backlog[i] = backlog_sum[i] / static_cast<double>(t);
        }

        for (std::size_t m = 0; m < theta.size(); ++m)
            theta.theta[m] += eta * gradient[m];

        record.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        trace.records.push_back(std::move(record));
    }
    return trace;
}

BoundReport check_theorem_bound(const RunTrace& trace, const TabularModel& model, const ControllerSet& controllers,
                                const Eigen::VectorXd& mu, double resolution)
{
    for (const auto& r : trace.records) {
        if (!r.value_exact)
            throw ContractViolation("bound check needs exact values on every iteration");
        if (r.probs.size() != controllers.size())
            throw ContractViolation("trace does not match the controller set");
    }
    if ((mu.array() <= 0.0).any())
        throw ContractViolation("bound check needs an initial distribution with full support");

    const double gamma = model.discount();
    BoundReport report;
    const auto best = best_in_class(model, controllers, mu, resolution);
    report.optimal = best.mixture;
    report.optimal_value = best.value;

    const auto base = controller_policies(model, controllers);
    const auto eval = evaluate_policy(model, mixture_policy(model, base, best.mixture), mu);
    report.visitation_ratio = eval.visitation.cwiseQuotient(mu).maxCoeff();
    report.inverse_mu = mu.cwiseInverse().maxCoeff();
    report.smoothness_factor = 7.0 * gamma * gamma + 4.0 * gamma + 5.0;

    report.c = std::numeric_limits<double>::infinity();
    for (const auto& r : trace.records) {
        for (std::size_t m = 0; m < r.probs.size(); ++m) {
            if (best.support[m])
                report.c = std::min(report.c, r.probs[m]);
        }
    }

    const auto m_count = static_cast<double>(controllers.size());
    const bool defined = report.c > 0.0;
    const double constant = defined ? m_count * report.smoothness_factor /
                                          (report.c * report.c * std::pow(1.0 - gamma, 3)) *
                                          report.visitation_ratio * report.visitation_ratio * report.inverse_mu
                                    : std::numeric_limits<double>::quiet_NaN();

    report.all_pass = true;
    for (const auto& r : trace.records) {
        BoundRow row;
        row.t = r.t;
        row.suboptimality = report.optimal_value - r.value;
        row.defined = defined;
        row.bound = constant / static_cast<double>(r.t);
        row.pass = defined && row.suboptimality <= row.bound;
        report.all_pass = report.all_pass && row.pass;
        report.rows.push_back(row);
    }
    report.notes = "values are negative discounted backlog and are maximized, so suboptimality is "
                   "V(pi*) - V(pi_t); pi* is the best grid point refined by exact ascent; rho = mu";
    if (!defined)
        report.notes += "; c is zero, bound undefined";
    return report;
}

StabilityReport stability_probe(const MixtureDistribution& policy, const ControllerSet& controllers,
                                const NetworkConfig& network, long slots, const QueueState& initial,
                                std::uint64_t seed)
{
    network.validate();
    if (slots < 2)
        throw ContractViolation("stability probe needs at least two slots");
    if (initial.size() != network.n_queues())
        throw ContractViolation("initial state does not match the number of queues");

    const std::size_t n = network.n_queues();
    RngStream arrival_rng(seed, "probe-arrivals");
    RngStream controller_rng(seed, "probe-controller");

    std::vector<std::vector<long>> per_queue(n, std::vector<long>(static_cast<std::size_t>(slots)));
    StabilityReport report;
    report.total_backlog.resize(static_cast<std::size_t>(slots));
    QueueState state = initial;
    for (long t = 0; t < slots; ++t) {
        const auto draw = sample_two_stage(policy, controllers, state, controller_rng);
        state = step(state, draw.action, sample_arrivals(network, arrival_rng), network.cap);
        for (std::size_t i = 0; i < n; ++i)
            per_queue[i][static_cast<std::size_t>(t)] = state.lengths[i];
        report.total_backlog[static_cast<std::size_t>(t)] = state.total();
    }

    // Least-squares slope against t = 1..slots.
    const double count = static_cast<double>(slots);
    const double t_mean = (count + 1.0) / 2.0;
    const double t_var = (count * count - 1.0) / 12.0 * count;
    auto fit = [&](const std::vector<long>& y, double& mean) {
        mean = 0.0;
        for (long v : y)
            mean += static_cast<double>(v);
        mean /= count;
        double cov = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k)
            cov += (static_cast<double>(k + 1) - t_mean) * (static_cast<double>(y[k]) - mean);
        return cov / t_var;
    };
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        report.queue_drift.push_back(fit(per_queue[i], mean));
        report.mean_backlog.push_back(mean);
    }
    report.total_drift = fit(report.total_backlog, report.mean_total_backlog);
    return report;
}

} // namespace mixsched
