#include "mixsched/exact_solver.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "mixsched/errors.hpp"

namespace mixsched {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what)
{
    if ((v.array() < -1e-15).any() || std::abs(v.sum() - 1.0) > 1e-9)
        throw ContractViolation(std::string(what) + " is not a probability distribution");
}

SparseMatrix transition_matrix(const TabularModel& model, const PolicyMatrix& policy)
{
    const std::size_t n = model.state_count();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(n * 4);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < model.action_count(); ++a) {
            const double pa = policy(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            if (pa == 0.0)
                continue;
            for (const auto& e : model.transitions(s, a))
                triplets.emplace_back(static_cast<int>(s), static_cast<int>(e.next), pa * e.probability);
        }
    }
    SparseMatrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    p.setFromTriplets(triplets.begin(), triplets.end());
    return p;
}

// Solves (I - gamma M) x = b where `op` applies M, refining until the residual is below tolerance.
template <typename Solve, typename Apply>
Eigen::VectorXd refined_solve(const Solve& solve, const Apply& apply, double gamma, const Eigen::VectorXd& b,
                              double& residual_out)
{
    Eigen::VectorXd x = solve(b);
    for (int round = 0; round < 4; ++round) {
        const Eigen::VectorXd residual = b - (x - gamma * apply(x));
        residual_out = residual.lpNorm<Eigen::Infinity>();
        if (residual_out <= kEvaluationTolerance * 0.1)
            break;
        x += solve(residual);
    }
    const Eigen::VectorXd residual = b - (x - gamma * apply(x));
    residual_out = residual.lpNorm<Eigen::Infinity>();
    return x;
}

} // namespace

std::size_t TabularModel::index_of(const QueueState& state) const
{
    if (state.size() != config_.n_queues())
        throw ContractViolation("state length does not match the model");
    const auto radix = static_cast<std::size_t>(*config_.cap) + 1;
    std::size_t index = 0;
    for (std::size_t i = state.size(); i-- > 0;) {
        const int q = state.lengths[i];
        if (q < 0 || q > *config_.cap)
            throw ContractViolation("state outside the truncated model");
        index = index * radix + static_cast<std::size_t>(q);
    }
    return index;
}

TabularModel build_model(const NetworkConfig& config)
{
    config.validate();
    if (!config.cap)
        throw ContractViolation("building a tabular model needs a truncation cap");

    const std::size_t n = config.n_queues();
    const auto radix = static_cast<std::size_t>(*config.cap) + 1;
    std::size_t count = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (count > kMaxModelStates / radix)
            throw ModelSizeError("truncated model exceeds " + std::to_string(kMaxModelStates) + " states");
        count *= radix;
    }

    TabularModel model;
    model.config_ = config;
    model.n_actions_ = action_count(n);
    model.states_.reserve(count);
    model.rewards_.resize(static_cast<Eigen::Index>(count));
    for (std::size_t index = 0; index < count; ++index) {
        QueueState s = QueueState::empty(n);
        std::size_t rest = index;
        for (std::size_t i = 0; i < n; ++i) {
            s.lengths[i] = static_cast<int>(rest % radix);
            rest /= radix;
        }
        model.rewards_[static_cast<Eigen::Index>(index)] = reward(s);
        model.states_.push_back(std::move(s));
    }

    model.kernel_.resize(count * model.n_actions_);
    for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t a = 0; a < model.n_actions_; ++a) {
            auto& row = model.kernel_[s * model.n_actions_ + a];
            for (const auto& t : enumerate_transitions(config, model.states_[s], ServiceAction::from_index(a)))
                row.push_back({model.index_of(t.next), t.probability});
        }
    }
    return model;
}

PolicyMatrix controller_policy(const TabularModel& model, const Controller& controller)
{
    PolicyMatrix policy(static_cast<Eigen::Index>(model.state_count()),
                        static_cast<Eigen::Index>(model.action_count()));
    for (std::size_t s = 0; s < model.state_count(); ++s) {
        const auto dist = controller.action_distribution(model.state(s));
        for (std::size_t a = 0; a < dist.size(); ++a)
            policy(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = dist[a];
    }
    return policy;
}

std::vector<PolicyMatrix> controller_policies(const TabularModel& model, const ControllerSet& controllers)
{
    std::vector<PolicyMatrix> out;
    out.reserve(controllers.size());
    for (const auto& k : controllers)
        out.push_back(controller_policy(model, k));
    return out;
}

PolicyMatrix mixture_policy(const TabularModel& model, const std::vector<PolicyMatrix>& base,
                            const MixtureDistribution& mixture)
{
    if (base.size() != mixture.size())
        throw ContractViolation("mixture size does not match the controller set");
    PolicyMatrix policy = PolicyMatrix::Zero(static_cast<Eigen::Index>(model.state_count()),
                                             static_cast<Eigen::Index>(model.action_count()));
    for (std::size_t m = 0; m < base.size(); ++m)
        policy += mixture.probs[m] * base[m];
    return policy;
}

Eigen::VectorXd uniform_distribution(const TabularModel& model)
{
    const auto n = static_cast<Eigen::Index>(model.state_count());
    return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

Eigen::VectorXd point_mass(const TabularModel& model, const QueueState& state)
{
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.state_count()));
    mu[static_cast<Eigen::Index>(model.index_of(state))] = 1.0;
    return mu;
}

EvaluationResult evaluate_policy(const TabularModel& model, const PolicyMatrix& policy,
                                 const Eigen::VectorXd& mu)
{
    const auto n = static_cast<Eigen::Index>(model.state_count());
    const auto n_actions = static_cast<Eigen::Index>(model.action_count());
    if (policy.rows() != n || policy.cols() != n_actions)
        throw ContractViolation("policy matrix shape does not match the model");
    if (mu.size() != n)
        throw ContractViolation("initial distribution length does not match the model");
    for (Eigen::Index s = 0; s < n; ++s)
        check_distribution(policy.row(s).transpose(), "policy row");
    check_distribution(mu, "initial distribution");

    const double gamma = model.discount();
    const SparseMatrix p = transition_matrix(model, policy);
    SparseMatrix system(n, n);
    system.setIdentity();
    system -= gamma * p;
    system.makeCompressed();

    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(system);
    if (lu.info() != Eigen::Success)
        throw SolverError("policy evaluation: factorization failed");

    EvaluationResult result;
    result.values = refined_solve([&](const Eigen::VectorXd& b) -> Eigen::VectorXd { return lu.solve(b); },
                                  [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return p * x; }, gamma,
                                  model.rewards(), result.value_residual);
    const Eigen::VectorXd source = (1.0 - gamma) * mu;
    result.visitation = refined_solve(
        [&](const Eigen::VectorXd& b) -> Eigen::VectorXd { return lu.transpose().solve(b); },
        [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return p.transpose() * x; }, gamma, source,
        result.visitation_residual);
    if (result.value_residual > kEvaluationTolerance || result.visitation_residual > kEvaluationTolerance)
        throw SolverError("policy evaluation residual above tolerance");

    result.q_values.resize(n, n_actions);
    for (Eigen::Index s = 0; s < n; ++s) {
        for (Eigen::Index a = 0; a < n_actions; ++a) {
            double next = 0.0;
            for (const auto& e : model.transitions(static_cast<std::size_t>(s), static_cast<std::size_t>(a)))
                next += e.probability * result.values[static_cast<Eigen::Index>(e.next)];
            result.q_values(s, a) = model.rewards()[s] + gamma * next;
        }
    }
    return result;
}

GradientAndValue exact_value_gradient(const TabularModel& model, const std::vector<PolicyMatrix>& base,
                                      const MixtureParams& params, const Eigen::VectorXd& mu)
{
    const auto mixture = softmax(params);
    const auto policy = mixture_policy(model, base, mixture);
    const auto eval = evaluate_policy(model, policy, mu);

    const auto n = static_cast<Eigen::Index>(model.state_count());
    const std::size_t m_count = base.size();
    // Qbar_m(s) = sum_a K_m(s,a) Q(s,a); the baseline is the pi-average of Qbar so
    // that the components cancel exactly rather than up to the solver residual.
    Eigen::MatrixXd qbar(n, static_cast<Eigen::Index>(m_count));
    for (std::size_t m = 0; m < m_count; ++m)
        qbar.col(static_cast<Eigen::Index>(m)) = base[m].cwiseProduct(eval.q_values).rowwise().sum();
    const Eigen::Map<const Eigen::VectorXd> probs(mixture.probs.data(), static_cast<Eigen::Index>(m_count));
    const Eigen::VectorXd baseline = qbar * probs;

    GradientAndValue out;
    out.value = eval.value_at(mu);
    out.gradient.resize(m_count);
    const double scale = 1.0 / (1.0 - model.discount());
    for (std::size_t m = 0; m < m_count; ++m) {
        const Eigen::VectorXd advantage = qbar.col(static_cast<Eigen::Index>(m)) - baseline;
        out.gradient[m] = scale * mixture.probs[m] * eval.visitation.dot(advantage);
    }
    return out;
}

std::vector<double> exact_value_gradient(const TabularModel& model, const ControllerSet& controllers,
                                         const MixtureParams& params, const Eigen::VectorXd& mu)
{
    if (params.size() != controllers.size())
        throw ContractViolation("parameter length does not match the controller set");
    return exact_value_gradient(model, controller_policies(model, controllers), params, mu).gradient;
}

double mixture_value(const TabularModel& model, const std::vector<PolicyMatrix>& base,
                     const MixtureDistribution& mixture, const Eigen::VectorXd& mu)
{
    return evaluate_policy(model, mixture_policy(model, base, mixture), mu).value_at(mu);
}

namespace {

std::vector<MixtureDistribution> simplex_grid(std::size_t m, double resolution)
{
    const auto steps = static_cast<int>(std::lround(1.0 / resolution));
    if (steps < 1)
        throw ContractViolation("grid resolution must be in (0,1]");
    const double h = 1.0 / steps;
    std::vector<MixtureDistribution> grid;
    switch (m) {
    case 1:
        grid.push_back({{1.0}});
        break;
    case 2:
        for (int i = 0; i <= steps; ++i)
            grid.push_back({{i * h, (steps - i) * h}});
        break;
    case 3:
        for (int i = 0; i <= steps; ++i) {
            for (int j = 0; j <= steps - i; ++j)
                grid.push_back({{i * h, j * h, (steps - i - j) * h}});
        }
        break;
    default:
        throw ContractViolation("best-in-class grid search supports at most 3 controllers");
    }
    return grid;
}

} // namespace

BestInClass best_in_class(const TabularModel& model, const ControllerSet& controllers,
                          const Eigen::VectorXd& mu, double resolution)
{
    const auto base = controller_policies(model, controllers);
    BestInClass best;
    best.grid_value = -std::numeric_limits<double>::infinity();
    for (const auto& point : simplex_grid(controllers.size(), resolution)) {
        const double v = mixture_value(model, base, point, mu);
        if (v > best.grid_value) {
            best.grid_value = v;
            best.grid_mixture = point;
        }
    }
    best.mixture = best.grid_mixture;
    best.value = best.grid_value;

    if (controllers.size() > 1) {
        // Armijo ascent in theta from the best grid point.
        MixtureParams theta;
        for (double p : best.grid_mixture.probs)
            theta.theta.push_back(std::log(std::max(p, 1e-6)));
        auto current = exact_value_gradient(model, base, theta, mu);
        double step = 1.0;
        for (int iter = 0; iter < 500; ++iter) {
            double g2 = 0.0;
            for (double g : current.gradient)
                g2 += g * g;
            if (std::sqrt(g2) < 1e-10)
                break;
            bool accepted = false;
            for (int halving = 0; halving < 60; ++halving) {
                MixtureParams trial = theta;
                for (std::size_t m = 0; m < trial.size(); ++m)
                    trial.theta[m] += step * current.gradient[m];
                auto next = exact_value_gradient(model, base, trial, mu);
                if (next.value >= current.value + 1e-4 * step * g2) {
                    theta = std::move(trial);
                    current = std::move(next);
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted)
                break;
        }
        if (current.value > best.value) {
            best.value = current.value;
            best.mixture = softmax(theta);
        }
    }

    best.support.resize(best.mixture.size());
    for (std::size_t m = 0; m < best.mixture.size(); ++m)
        best.support[m] = best.mixture.probs[m] > 1e-8;
    return best;
}

void write_evaluation_csv(const std::filesystem::path& path, const TabularModel& model,
                          const EvaluationResult& result)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    const std::size_t n_queues = model.config().n_queues();
    out << "state";
    for (std::size_t i = 0; i < n_queues; ++i)
        out << ",q" << i + 1;
    out << ",value";
    for (std::size_t a = 0; a < model.action_count(); ++a)
        out << ",q_value_" << (a == 0 ? std::string("none") : "serve" + std::to_string(a));
    out << ",visitation\n";
    out << std::setprecision(17);
    for (std::size_t s = 0; s < model.state_count(); ++s) {
        const auto row = static_cast<Eigen::Index>(s);
        out << s;
        for (int q : model.state(s).lengths)
            out << ',' << q;
        out << ',' << result.values[row];
        for (Eigen::Index a = 0; a < result.q_values.cols(); ++a)
            out << ',' << result.q_values(row, a);
        out << ',' << result.visitation[row] << '\n';
    }
}

} // namespace mixsched

namespace mixsched {

Eigen::VectorXd to_vector(const TabularModel& model, const InitialDistribution& mu)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.state_count()));
    for (std::size_t i = 0; i < mu.states.size(); ++i)
        out[static_cast<Eigen::Index>(model.index_of(mu.states[i]))] += mu.probs[i];
    return out;
}

} // namespace mixsched
