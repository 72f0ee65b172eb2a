#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mixsched/queue_env.hpp"

namespace mixsched {

// Probability per dense action index (see ServiceAction::index), length N+1.
using ActionDistribution = std::vector<double>;

// A stationary base scheduler K_m: state -> distribution over service actions.
// Immutable once built.
class Controller {
public:
    enum class Kind { ServeFixed, LongestQueueFirst, UniformRandom, ServeNone };

    static Controller serve_fixed(std::size_t queue) { return Controller(Kind::ServeFixed, queue); }
    static Controller longest_queue_first() { return Controller(Kind::LongestQueueFirst); }
    static Controller uniform_random() { return Controller(Kind::UniformRandom); }
    static Controller serve_none() { return Controller(Kind::ServeNone); }

    // Parses "serve:<i>" (1-based), "lqf", "random" or "none".
    static Controller from_tag(std::string_view tag);

    Kind kind() const { return kind_; }
    std::size_t queue() const { return queue_; }
    std::string tag() const;

    // K_m(state, .). Throws ContractViolation when a fixed queue is out of range.
    ActionDistribution action_distribution(const QueueState& state) const;

    // Draws from action_distribution(state) by inverse CDF with `u` in [0,1),
    // without materializing the distribution.
    ServiceAction sample(const QueueState& state, double u) const;

private:
    explicit Controller(Kind kind, std::size_t queue = 0) : kind_(kind), queue_(queue) {}

    Kind kind_;
    std::size_t queue_;
};

using ControllerSet = std::vector<Controller>;

ControllerSet controllers_from_tags(const std::vector<std::string>& tags);

// Tags accepted by Controller::from_tag, with a one-line description each.
std::vector<std::pair<std::string, std::string>> known_controller_tags();

} // namespace mixsched
