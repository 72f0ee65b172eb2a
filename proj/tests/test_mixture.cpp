#include "doctest.h"

#include <cmath>
#include <numeric>

#include "mixsched/errors.hpp"
#include "mixsched/mixture.hpp"

using namespace mixsched;

namespace {

QueueState qs(std::vector<int> v) { return {std::move(v)}; }
std::size_t serve(std::size_t i) { return ServiceAction::serve(i).index(); }

ControllerSet tags(std::initializer_list<const char*> list)
{
    ControllerSet out;
    for (const char* t : list)
        out.push_back(Controller::from_tag(t));
    return out;
}

// chi-squared upper 0.001 quantiles by degrees of freedom
double chi2_critical(std::size_t dof)
{
    static const double table[] = {0.0, 10.828, 13.816, 16.266, 18.467};
    return table[dof];
}

} // namespace

TEST_CASE("softmax")
{
    auto p = softmax({{1.0, 1.0}}).probs;
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));

    p = softmax({{std::log(2.0), 0.0, 0.0}}).probs;
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(0.25).epsilon(1e-14));

    RngStream rng(4, "theta");
    for (int trial = 0; trial < 100; ++trial) {
        MixtureParams theta{{rng.normal() * 3, rng.normal() * 3, rng.normal() * 3}};
        const double c = rng.normal() * 50;
        MixtureParams shifted = theta;
        for (double& t : shifted.theta)
            t += c;
        const auto a = softmax(theta).probs;
        const auto b = softmax(shifted).probs;
        CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0) <= 1e-12);
        for (std::size_t m = 0; m < 3; ++m) {
            CHECK(a[m] > 0.0);
            CHECK(a[m] == doctest::Approx(b[m]).epsilon(1e-12));
        }
    }

    // large weights do not overflow
    p = softmax({{1000.0, 999.0}}).probs;
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));

    CHECK_THROWS_AS(softmax({{1.0, NAN}}), ContractViolation);
    CHECK_THROWS_AS(softmax({{INFINITY, 0.0}}), ContractViolation);
    CHECK_THROWS_AS(softmax({{}}), ContractViolation);
}

TEST_CASE("action law")
{
    auto law = action_law(MixtureParams{{1.0, 1.0}}, tags({"serve:1", "serve:2"}), qs({3, 0}));
    CHECK(law[serve(0)] == doctest::Approx(0.5));
    CHECK(law[serve(1)] == doctest::Approx(0.5));

    law = action_law(MixtureDistribution{{0.25, 0.75}}, tags({"serve:1", "lqf"}), qs({5, 3}));
    CHECK(law[serve(0)] == doctest::Approx(1.0));

    law = action_law(MixtureParams{{0.0, 0.0, 0.0}}, tags({"serve:1", "serve:2", "lqf"}), qs({2, 2}));
    CHECK(law[serve(0)] == doctest::Approx(2.0 / 3).epsilon(1e-14));
    CHECK(law[serve(1)] == doctest::Approx(1.0 / 3).epsilon(1e-14));

    CHECK_THROWS_AS(action_law(MixtureParams{{0.0}}, tags({"serve:1", "lqf"}), qs({1, 1})), ContractViolation);
}

TEST_CASE("action law equals the brute-force weighted sum")
{
    const auto c = tags({"serve:1", "serve:2", "lqf", "random"});
    RngStream rng(6, "theta");
    for (int trial = 0; trial < 200; ++trial) {
        MixtureParams theta{{rng.normal(), rng.normal(), rng.normal(), rng.normal()}};
        const auto s = qs({static_cast<int>(rng.uniform() * 6), static_cast<int>(rng.uniform() * 6)});
        const auto law = action_law(theta, c, s);
        const auto pi = softmax(theta).probs;
        for (std::size_t a = 0; a < law.size(); ++a) {
            double sum = 0.0;
            for (std::size_t m = 0; m < c.size(); ++m)
                sum += pi[m] * c[m].action_distribution(s)[a];
            CHECK(law[a] == doctest::Approx(sum).epsilon(1e-14));
        }
        CHECK(std::abs(std::accumulate(law.begin(), law.end(), 0.0) - 1.0) <= 1e-12);
    }
}

TEST_CASE("two-stage sampling")
{
    SUBCASE("controller frequencies")
    {
        const auto c = tags({"serve:1", "serve:2"});
        RngStream rng(8, "controller");
        const int draws = 100000;
        int first = 0;
        for (int i = 0; i < draws; ++i)
            first += sample_two_stage(softmax({{1.0, 1.0}}), c, qs({1, 1}), rng).controller == 0;
        CHECK(std::abs(static_cast<double>(first) / draws - 0.5) <= 0.005);

        first = 0;
        for (int i = 0; i < draws; ++i)
            first += sample_two_stage(softmax({{100.0, 0.0}}), c, qs({1, 1}), rng).controller == 0;
        CHECK(static_cast<double>(first) / draws > 0.999);
    }
    SUBCASE("marginal action law passes a chi-squared test")
    {
        const auto c = tags({"serve:1", "serve:2", "lqf", "random"});
        const MixtureParams theta{{0.3, -0.5, 0.8, 0.1}};
        for (const auto& s : {qs({0, 0}), qs({4, 1}), qs({2, 2})}) {
            const auto law = action_law(theta, c, s);
            RngStream rng(9, "controller");
            const int draws = 100000;
            std::vector<double> counts(law.size(), 0.0);
            for (int i = 0; i < draws; ++i)
                counts[sample_two_stage(softmax(theta), c, s, rng).action.index()] += 1;
            double chi2 = 0.0;
            std::size_t cells = 0;
            for (std::size_t a = 0; a < law.size(); ++a) {
                if (law[a] == 0.0) {
                    CHECK(counts[a] == 0.0);
                    continue;
                }
                const double expected = law[a] * draws;
                chi2 += (counts[a] - expected) * (counts[a] - expected) / expected;
                ++cells;
                const double sigma = std::sqrt(law[a] * (1 - law[a]) / draws);
                CHECK(std::abs(counts[a] / draws - law[a]) <= 3 * sigma);
            }
            CHECK(chi2 < chi2_critical(cells - 1));
        }
    }
}

TEST_CASE("score function")
{
    const auto two = tags({"serve:1", "serve:2"});
    auto g = score({{1.0, 1.0}}, two, qs({1, 1}), ServiceAction::serve(0));
    CHECK(g[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(-0.5).epsilon(1e-14));

    CHECK_THROWS_AS(score({{1.0, 1.0}}, two, qs({1, 1}), ServiceAction::none()), UndefinedScore);

    // central finite differences of log action_law
    const auto c = tags({"serve:1", "serve:2", "lqf", "random"});
    RngStream rng(10, "theta");
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        MixtureParams theta{{rng.normal(), rng.normal(), rng.normal(), rng.normal()}};
        const auto s = qs({static_cast<int>(rng.uniform() * 5), static_cast<int>(rng.uniform() * 5)});
        for (std::size_t a = 0; a < action_count(2); ++a) {
            const auto law = action_law(theta, c, s);
            if (law[a] == 0.0)
                continue;
            const auto sc = score(theta, c, s, ServiceAction::from_index(a));
            CHECK(std::abs(std::accumulate(sc.begin(), sc.end(), 0.0)) <= 1e-12);
            for (std::size_t m = 0; m < c.size(); ++m) {
                auto up = theta, down = theta;
                up.theta[m] += h;
                down.theta[m] -= h;
                const double fd =
                    (std::log(action_law(up, c, s)[a]) - std::log(action_law(down, c, s)[a])) / (2 * h);
                CHECK(std::abs(fd - sc[m]) <= 1e-6);
            }
        }
    }
}
