#pragma once

#include <cstddef>
#include <compare>
#include <optional>
#include <vector>

#include "mixsched/rng.hpp"

namespace mixsched {

// Queue lengths Q_i(t), one entry per queue.
struct QueueState {
    std::vector<int> lengths;

    std::size_t size() const { return lengths.size(); }
    long total() const;

    static QueueState empty(std::size_t n_queues) { return {std::vector<int>(n_queues, 0)}; }

    auto operator<=>(const QueueState&) const = default;
};

// At most one queue is served per slot: either nothing or queue `*served` (0-based).
// The dense action index is 0 for "none" and i+1 for "serve queue i".
struct ServiceAction {
    std::optional<std::size_t> served;

    static ServiceAction none() { return {}; }
    static ServiceAction serve(std::size_t queue) { return {queue}; }
    static ServiceAction from_index(std::size_t index);

    std::size_t index() const { return served ? *served + 1 : 0; }

    bool operator==(const ServiceAction&) const = default;
};

inline std::size_t action_count(std::size_t n_queues) { return n_queues + 1; }

struct ArrivalSample {
    std::vector<int> arrivals; // each 0 or 1
};

struct NetworkConfig {
    std::vector<double> arrival_rates; // Bernoulli success probability per queue and slot
    double discount = 0.9;
    std::optional<int> cap;            // truncation level B; nullopt simulates the untruncated network

    std::size_t n_queues() const { return arrival_rates.size(); }

    // Throws ContractViolation unless N >= 1, every rate is in [0,1),
    // the discount is in (0,1) and the cap (when set) is nonnegative.
    void validate() const;
};

// Piecewise-constant arrival rates keyed by slot (ascent iteration) index.
class ArrivalSchedule {
public:
    struct Segment {
        long start = 0;
        std::vector<double> rates;
    };

    ArrivalSchedule() = default;
    explicit ArrivalSchedule(std::vector<double> constant_rates);
    explicit ArrivalSchedule(std::vector<Segment> segments);

    const std::vector<double>& rates_at(long slot) const;
    std::size_t segment_at(long slot) const;
    const std::vector<Segment>& segments() const { return segments_; }

private:
    std::vector<Segment> segments_;
};

// Q_i(t+1) = (Q_i(t) - D_i(t))^+ + A_i(t+1), clamped at `cap` when set.
QueueState step(const QueueState& state, ServiceAction action, const ArrivalSample& arrivals,
                std::optional<int> cap = std::nullopt);

ArrivalSample sample_arrivals(const NetworkConfig& config, RngStream& rng);

// Single-stage reward -sum_i Q_i, independent of the action.
double reward(const QueueState& state);

struct Transition {
    QueueState next;
    double probability = 0.0;
};

// Exact next-state law for the truncated network. Duplicate next states produced
// by the cap are merged; the result is sorted by state.
std::vector<Transition> enumerate_transitions(const NetworkConfig& config, const QueueState& state,
                                              ServiceAction action);

// True iff the arrival rates lie strictly inside the capacity region sum_i lambda_i < 1.
bool capacity_check(const NetworkConfig& config);

} // namespace mixsched

namespace mixsched {

// Initial-state law mu over a finite support.
struct InitialDistribution {
    std::vector<QueueState> states;
    std::vector<double> probs;

    static InitialDistribution point(QueueState state);
    // Uniform over every truncated state; needs a cap.
    static InitialDistribution uniform(const NetworkConfig& config);

    QueueState sample(RngStream& rng) const;
};

} // namespace mixsched
