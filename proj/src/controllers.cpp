#include "mixsched/controllers.hpp"

#include <algorithm>
#include <charconv>

#include "mixsched/errors.hpp"

namespace mixsched {

Controller Controller::from_tag(std::string_view tag)
{
    if (tag == "lqf")
        return longest_queue_first();
    if (tag == "random")
        return uniform_random();
    if (tag == "none")
        return serve_none();
    constexpr std::string_view prefix = "serve:";
    if (tag.substr(0, prefix.size()) == prefix) {
        auto digits = tag.substr(prefix.size());
        std::size_t queue = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), queue);
        if (ec == std::errc{} && ptr == digits.data() + digits.size() && queue >= 1)
            return serve_fixed(queue - 1);
    }
    throw ContractViolation("unknown controller tag '" + std::string(tag) + "'");
}

std::string Controller::tag() const
{
    switch (kind_) {
    case Kind::ServeFixed:
        return "serve:" + std::to_string(queue_ + 1);
    case Kind::LongestQueueFirst:
        return "lqf";
    case Kind::UniformRandom:
        return "random";
    case Kind::ServeNone:
        return "none";
    }
    return "?";
}

ActionDistribution Controller::action_distribution(const QueueState& state) const
{
    const std::size_t n = state.size();
    ActionDistribution dist(action_count(n), 0.0);
    switch (kind_) {
    case Kind::ServeFixed:
        if (queue_ >= n)
            throw ContractViolation("controller " + tag() + " refers to a queue the network lacks");
        dist[ServiceAction::serve(queue_).index()] = 1.0;
        break;
    case Kind::LongestQueueFirst: {
        // Lowest index wins ties; an all-empty system idles.
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (state.lengths[i] > state.lengths[best])
                best = i;
        }
        if (state.lengths[best] > 0)
            dist[ServiceAction::serve(best).index()] = 1.0;
        else
            dist[ServiceAction::none().index()] = 1.0;
        break;
    }
    case Kind::UniformRandom:
        for (std::size_t i = 0; i < n; ++i)
            dist[ServiceAction::serve(i).index()] = 1.0 / static_cast<double>(n);
        break;
    case Kind::ServeNone:
        dist[ServiceAction::none().index()] = 1.0;
        break;
    }
    return dist;
}

ServiceAction Controller::sample(const QueueState& state, double u) const
{
    const std::size_t n = state.size();
    switch (kind_) {
    case Kind::ServeFixed:
        if (queue_ >= n)
            throw ContractViolation("controller " + tag() + " refers to a queue the network lacks");
        return ServiceAction::serve(queue_);
    case Kind::LongestQueueFirst: {
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (state.lengths[i] > state.lengths[best])
                best = i;
        }
        return state.lengths[best] > 0 ? ServiceAction::serve(best) : ServiceAction::none();
    }
    case Kind::UniformRandom:
        return ServiceAction::serve(std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n))));
    case Kind::ServeNone:
        break;
    }
    return ServiceAction::none();
}

ControllerSet controllers_from_tags(const std::vector<std::string>& tags)
{
    ControllerSet out;
    out.reserve(tags.size());
    for (const auto& tag : tags)
        out.push_back(Controller::from_tag(tag));
    return out;
}

std::vector<std::pair<std::string, std::string>> known_controller_tags()
{
    return {
        {"serve:<i>", "always serve queue i (1-based), even when it is empty"},
        {"lqf", "serve the longest nonempty queue, lowest index on ties, idle when empty"},
        {"random", "serve one queue uniformly at random"},
        {"none", "never serve"},
    };
}

} // namespace mixsched
