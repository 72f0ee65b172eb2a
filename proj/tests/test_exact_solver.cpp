#include "doctest.h"

#include <cmath>
#include <map>

#include "mixsched/errors.hpp"
#include "mixsched/exact_solver.hpp"

using namespace mixsched;

namespace {

QueueState qs(std::vector<int> v) { return {std::move(v)}; }

ControllerSet tags(std::initializer_list<const char*> list)
{
    ControllerSet out;
    for (const char* t : list)
        out.push_back(Controller::from_tag(t));
    return out;
}

// Independent oracle: value iteration over a std::map state space built directly
// from enumerate_transitions and the controller's action law.
struct ValueIterationOracle {
    std::map<std::vector<int>, double> values;
    std::map<std::vector<int>, double> visitation;
};

ValueIterationOracle value_iteration(const NetworkConfig& config, const Controller& k,
                                     const std::map<std::vector<int>, double>& mu, double tol = 1e-13)
{
    const int b = *config.cap;
    std::vector<QueueState> states;
    for (int x = 0; x <= b; ++x)
        for (int y = 0; y <= b; ++y)
            states.push_back(qs({x, y}));
    std::map<std::vector<int>, std::vector<Transition>> kernel;
    for (const auto& s : states) {
        const auto pi = k.action_distribution(s);
        std::map<std::vector<int>, double> merged;
        for (std::size_t a = 0; a < pi.size(); ++a) {
            if (pi[a] == 0.0)
                continue;
            for (const auto& t : enumerate_transitions(config, s, ServiceAction::from_index(a)))
                merged[t.next.lengths] += pi[a] * t.probability;
        }
        for (auto& [n, p] : merged)
            kernel[s.lengths].push_back({qs(n), p});
    }

    ValueIterationOracle out;
    for (const auto& s : states)
        out.values[s.lengths] = 0.0;
    const double gamma = config.discount;
    for (int iter = 0; iter < 100000; ++iter) {
        double change = 0.0;
        auto next = out.values;
        for (const auto& s : states) {
            double v = -static_cast<double>(s.total());
            for (const auto& t : kernel[s.lengths])
                v += gamma * t.probability * out.values[t.next.lengths];
            change = std::max(change, std::abs(v - out.values[s.lengths]));
            next[s.lengths] = v;
        }
        out.values = std::move(next);
        if (change < tol)
            break;
    }

    // d = (1-gamma) sum_t gamma^t mu P^t by forward propagation
    std::map<std::vector<int>, double> dist = mu;
    double weight = 1.0 - gamma;
    for (int t = 0; t < 100000 && weight > 1e-18; ++t) {
        std::map<std::vector<int>, double> next;
        for (const auto& [s, p] : dist) {
            out.visitation[s] += weight * p;
            for (const auto& tr : kernel[s])
                next[tr.next.lengths] += p * tr.probability;
        }
        dist = std::move(next);
        weight *= gamma;
    }
    return out;
}

double fd_value(const TabularModel& model, const std::vector<PolicyMatrix>& base, MixtureParams theta,
                std::size_t m, double h, const Eigen::VectorXd& mu)
{
    auto up = theta, down = theta;
    up.theta[m] += h;
    down.theta[m] -= h;
    return (mixture_value(model, base, softmax(up), mu) - mixture_value(model, base, softmax(down), mu)) / (2 * h);
}

// Richardson-extrapolated central difference, O(h^4); resolves components far
// smaller than the O(h^2) rule can at h = 1e-5.
double richardson_value(const TabularModel& model, const std::vector<PolicyMatrix>& base, const MixtureParams& theta,
                        std::size_t m, double h, const Eigen::VectorXd& mu)
{
    return (4 * fd_value(model, base, theta, m, h / 2, mu) - fd_value(model, base, theta, m, h, mu)) / 3;
}

} // namespace

TEST_CASE("model construction")
{
    auto m1 = build_model({{0.3}, 0.9, 2});
    CHECK(m1.state_count() == 3);
    CHECK(m1.action_count() == 2);

    auto m2 = build_model({{0.3, 0.4}, 0.9, 5});
    CHECK(m2.state_count() == 36);
    for (std::size_t s = 0; s < m2.state_count(); ++s) {
        CHECK(m2.index_of(m2.state(s)) == s);
        CHECK(m2.rewards()[static_cast<Eigen::Index>(s)] == -static_cast<double>(m2.state(s).total()));
        for (std::size_t a = 0; a < m2.action_count(); ++a) {
            double total = 0.0;
            for (const auto& e : m2.transitions(s, a))
                total += e.probability;
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }
    CHECK(build_model({{0.1, 0.2, 0.3}, 0.9, 4}).state_count() == 125);

    CHECK_THROWS_AS(build_model({std::vector<double>(8, 0.1), 0.9, 9}), ModelSizeError);
    CHECK_THROWS_AS(build_model({{0.3}, 0.9, std::nullopt}), ContractViolation);
}

TEST_CASE("policy evaluation: hand-computed cases")
{
    {
        const auto model = build_model({{0.0}, 0.5, 3});
        const auto mu = point_mass(model, qs({1}));
        const auto eval = evaluate_policy(model, controller_policy(model, Controller::serve_fixed(0)), mu);
        CHECK(eval.value_at(mu) == doctest::Approx(-1.0).epsilon(1e-14));
        // from q, serving every slot: -(q + q-1 + ...)/ weighted by 0.5^t
        CHECK(eval.values[static_cast<Eigen::Index>(model.index_of(qs({3})))] ==
              doctest::Approx(-(3 + 2 * 0.5 + 1 * 0.25)).epsilon(1e-14));
    }
    {
        const auto model = build_model({{0.3, 0.4}, 0.9, 0});
        CHECK(model.state_count() == 1);
        const auto eval = evaluate_policy(model, controller_policy(model, Controller::longest_queue_first()),
                                          uniform_distribution(model));
        CHECK(eval.values[0] == 0.0);
        CHECK(eval.visitation[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("policy evaluation matches value iteration and satisfies its invariants")
{
    const NetworkConfig config{{0.3, 0.4}, 0.9, 5};
    const auto model = build_model(config);
    const auto mu = point_mass(model, qs({0, 0}));
    for (const char* tag : {"lqf", "serve:1", "random"}) {
        const auto k = Controller::from_tag(tag);
        const auto eval = evaluate_policy(model, controller_policy(model, k), mu);
        const auto oracle = value_iteration(config, k, {{{0, 0}, 1.0}});
        for (std::size_t s = 0; s < model.state_count(); ++s) {
            const auto i = static_cast<Eigen::Index>(s);
            CHECK(std::abs(eval.values[i] - oracle.values.at(model.state(s).lengths)) <= 1e-10);
            const auto it = oracle.visitation.find(model.state(s).lengths);
            CHECK(std::abs(eval.visitation[i] - (it == oracle.visitation.end() ? 0.0 : it->second)) <= 1e-10);
            CHECK(eval.values[i] <= 0.0);
            CHECK(eval.visitation[i] >= -1e-15);
        }
        CHECK(eval.value_residual <= 1e-10);
        CHECK(eval.visitation_residual <= 1e-10);
        CHECK(std::abs(eval.visitation.sum() - 1.0) <= 1e-10);
    }
}

TEST_CASE("visitation collapses to mu as the discount vanishes")
{
    const auto model = build_model({{0.3, 0.4}, 1e-12, 4});
    const auto mu = uniform_distribution(model);
    const auto eval = evaluate_policy(model, controller_policy(model, Controller::longest_queue_first()), mu);
    CHECK((eval.visitation - mu).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("evaluation rejects malformed policies")
{
    const auto model = build_model({{0.3}, 0.9, 3});
    PolicyMatrix bad = PolicyMatrix::Constant(4, 2, 0.7);
    CHECK_THROWS_AS(evaluate_policy(model, bad, uniform_distribution(model)), ContractViolation);
    CHECK_THROWS_AS(evaluate_policy(model, PolicyMatrix::Constant(3, 2, 0.5), uniform_distribution(model)),
                    ContractViolation);
    CHECK_THROWS_AS(evaluate_policy(model, PolicyMatrix::Constant(4, 2, 0.5), Eigen::VectorXd::Zero(4)),
                    ContractViolation);
}

TEST_CASE("value decreases as arrival rates grow")
{
    const auto k = Controller::longest_queue_first();
    std::vector<Eigen::VectorXd> values;
    for (double lambda : {0.0, 0.1, 0.2, 0.3, 0.4}) {
        const auto model = build_model({{lambda, lambda + 0.05}, 0.9, 5});
        values.push_back(evaluate_policy(model, controller_policy(model, k), uniform_distribution(model)).values);
    }
    for (std::size_t i = 1; i < values.size(); ++i)
        CHECK(((values[i] - values[i - 1]).array() <= 1e-12).all());
}

TEST_CASE("exact gradient matches finite differences")
{
    const auto model = build_model({{0.3, 0.4}, 0.9, 5});
    const auto mu = uniform_distribution(model);
    RngStream rng(12, "theta");
    struct Case {
        ControllerSet set;
        bool richardson;
    };
    for (const auto& [set, richardson] : {Case{tags({"serve:1", "serve:2"}), false},
                                          Case{tags({"serve:1", "serve:2", "lqf"}), true}}) {
        const auto base = controller_policies(model, set);
        for (int trial = 0; trial < 20; ++trial) {
            MixtureParams theta;
            for (std::size_t m = 0; m < set.size(); ++m)
                theta.theta.push_back(rng.normal());
            const auto g = exact_value_gradient(model, set, theta, mu);
            double sum = 0.0;
            for (std::size_t m = 0; m < set.size(); ++m) {
                const double fd = richardson ? richardson_value(model, base, theta, m, 1e-3, mu)
                                             : fd_value(model, base, theta, m, 1e-5, mu);
                CHECK(std::abs(g[m] - fd) <= 1e-6 * std::abs(fd));
                sum += g[m];
            }
            CHECK(std::abs(sum) <= 1e-12 * static_cast<double>(set.size()));
        }
    }
}

TEST_CASE("gradient vanishes on a symmetric system at the symmetric mixture")
{
    const auto model = build_model({{0.49, 0.49}, 0.9, 10});
    const auto g = exact_value_gradient(model, tags({"serve:1", "serve:2"}), {{1.0, 1.0}}, uniform_distribution(model));
    CHECK(std::abs(g[0] - g[1]) <= 1e-9);
}

TEST_CASE("LQF tie-breaking does not change values on the symmetric network")
{
    const auto model = build_model({{0.49, 0.49}, 0.9, 10});
    const auto mu = uniform_distribution(model);
    const auto lowest = controller_policy(model, Controller::longest_queue_first());
    PolicyMatrix highest = lowest, random = lowest;
    for (std::size_t s = 0; s < model.state_count(); ++s) {
        const auto& q = model.state(s).lengths;
        if (q[0] == q[1] && q[0] > 0) {
            const auto row = static_cast<Eigen::Index>(s);
            highest.row(row) << 0.0, 0.0, 1.0;
            random.row(row) << 0.0, 0.5, 0.5;
        }
    }
    const double v_low = evaluate_policy(model, lowest, mu).value_at(mu);
    CHECK(std::abs(evaluate_policy(model, highest, mu).value_at(mu) - v_low) <= 1e-6);
    CHECK(std::abs(evaluate_policy(model, random, mu).value_at(mu) - v_low) <= 1e-6);
}

TEST_CASE("best in class")
{
    SUBCASE("symmetric rates pick the even mixture")
    {
        const auto model = build_model({{0.49, 0.49}, 0.9, 10});
        const auto best = best_in_class(model, tags({"serve:1", "serve:2"}), uniform_distribution(model));
        CHECK(best.mixture.probs[0] == doctest::Approx(0.5).epsilon(1e-3));
        CHECK(best.support == std::vector<bool>{true, true});
    }
    SUBCASE("LQF corner is optimal when available")
    {
        const auto model = build_model({{0.3, 0.4}, 0.9, 10});
        const auto best = best_in_class(model, tags({"serve:1", "serve:2", "lqf"}), uniform_distribution(model));
        CHECK(best.grid_mixture.probs == std::vector<double>{0.0, 0.0, 1.0});
        CHECK(best.mixture.probs[2] > 0.999);
        CHECK(best.support == std::vector<bool>{false, false, true});
    }
    SUBCASE("interior optimum agrees with an independent grid search")
    {
        const auto model = build_model({{0.3, 0.4}, 0.9, 10});
        const auto mu = uniform_distribution(model);
        const auto set = tags({"serve:1", "serve:2"});
        const auto best = best_in_class(model, set, mu, 0.01);

        double oracle = -1e300;
        for (int i = 0; i <= 100; ++i) {
            const double p = i / 100.0;
            PolicyMatrix pi = p * controller_policy(model, set[0]) + (1 - p) * controller_policy(model, set[1]);
            oracle = std::max(oracle, evaluate_policy(model, pi, mu).value_at(mu));
        }
        CHECK(std::abs(best.grid_value - oracle) <= 1e-6);
        CHECK(best.value >= best.grid_value);
        CHECK(best.mixture.probs[0] > 0.05);
        CHECK(best.mixture.probs[1] > 0.05);
    }
}
