#include "mixsched/queue_env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "mixsched/errors.hpp"

namespace mixsched {

long QueueState::total() const
{
    return std::accumulate(lengths.begin(), lengths.end(), 0L);
}

ServiceAction ServiceAction::from_index(std::size_t index)
{
    return index == 0 ? none() : serve(index - 1);
}

void NetworkConfig::validate() const
{
    if (arrival_rates.empty())
        throw ContractViolation("network needs at least one queue");
    for (double rate : arrival_rates) {
        if (!(rate >= 0.0 && rate < 1.0))
            throw ContractViolation("arrival rate " + std::to_string(rate) + " outside [0,1)");
    }
    if (!(discount > 0.0 && discount < 1.0))
        throw ContractViolation("discount " + std::to_string(discount) + " outside (0,1)");
    if (cap && *cap < 0)
        throw ContractViolation("truncation cap must be nonnegative");
}

ArrivalSchedule::ArrivalSchedule(std::vector<double> constant_rates)
    : segments_{{0, std::move(constant_rates)}}
{
}

ArrivalSchedule::ArrivalSchedule(std::vector<Segment> segments) : segments_(std::move(segments))
{
    if (segments_.empty() || segments_.front().start != 0)
        throw ContractViolation("arrival schedule must start at slot 0");
    for (std::size_t i = 1; i < segments_.size(); ++i) {
        if (segments_[i].start <= segments_[i - 1].start)
            throw ContractViolation("arrival schedule start slots must be strictly increasing");
        if (segments_[i].rates.size() != segments_.front().rates.size())
            throw ContractViolation("arrival schedule segments disagree on the number of queues");
    }
}

std::size_t ArrivalSchedule::segment_at(long slot) const
{
    auto it = std::upper_bound(segments_.begin(), segments_.end(), slot,
                               [](long s, const Segment& seg) { return s < seg.start; });
    return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - segments_.begin()) - 1));
}

const std::vector<double>& ArrivalSchedule::rates_at(long slot) const
{
    return segments_.at(segment_at(slot)).rates;
}

QueueState step(const QueueState& state, ServiceAction action, const ArrivalSample& arrivals,
                std::optional<int> cap)
{
    const std::size_t n = state.size();
    if (arrivals.arrivals.size() != n)
        throw ContractViolation("arrival vector length does not match the number of queues");
    if (action.served && *action.served >= n)
        throw ContractViolation("served queue index out of range");

    QueueState next = state;
    for (std::size_t i = 0; i < n; ++i) {
        int q = state.lengths[i];
        if (q < 0)
            throw ContractViolation("negative queue length");
        if (action.served == i)
            q = std::max(0, q - 1);
        q += arrivals.arrivals[i];
        if (cap)
            q = std::min(q, *cap);
        next.lengths[i] = q;
    }
    return next;
}

ArrivalSample sample_arrivals(const NetworkConfig& config, RngStream& rng)
{
    ArrivalSample sample;
    sample.arrivals.reserve(config.n_queues());
    for (double rate : config.arrival_rates)
        sample.arrivals.push_back(rng.bernoulli(rate) ? 1 : 0);
    return sample;
}

double reward(const QueueState& state)
{
    return -static_cast<double>(state.total());
}

std::vector<Transition> enumerate_transitions(const NetworkConfig& config, const QueueState& state,
                                              ServiceAction action)
{
    const std::size_t n = config.n_queues();
    if (state.size() != n)
        throw ContractViolation("state length does not match the number of queues");
    if (!config.cap)
        throw ContractViolation("transition enumeration needs a truncation cap");
    if (n >= 8 * sizeof(unsigned long) - 1)
        throw ContractViolation("too many queues to enumerate arrival patterns");

    std::map<QueueState, double> merged;
    ArrivalSample pattern{std::vector<int>(n, 0)};
    for (unsigned long bits = 0; bits < (1UL << n); ++bits) {
        double p = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool arrives = (bits >> i) & 1UL;
            pattern.arrivals[i] = arrives ? 1 : 0;
            p *= arrives ? config.arrival_rates[i] : 1.0 - config.arrival_rates[i];
        }
        if (p == 0.0)
            continue;
        merged[step(state, action, pattern, config.cap)] += p;
    }

    std::vector<Transition> out;
    out.reserve(merged.size());
    for (auto& [next, p] : merged)
        out.push_back({next, p});
    return out;
}

bool capacity_check(const NetworkConfig& config)
{
    const double load = std::accumulate(config.arrival_rates.begin(), config.arrival_rates.end(), 0.0);
    return load < 1.0;
}

} // namespace mixsched

namespace mixsched {

InitialDistribution InitialDistribution::point(QueueState state)
{
    return {{std::move(state)}, {1.0}};
}

InitialDistribution InitialDistribution::uniform(const NetworkConfig& config)
{
    if (!config.cap)
        throw ContractViolation("a uniform initial distribution needs a truncation cap");
    const std::size_t n = config.n_queues();
    const auto radix = static_cast<std::size_t>(*config.cap) + 1;
    std::size_t count = 1;
    for (std::size_t i = 0; i < n; ++i)
        count *= radix;
    InitialDistribution mu;
    mu.states.reserve(count);
    for (std::size_t index = 0; index < count; ++index) {
        QueueState s = QueueState::empty(n);
        std::size_t rest = index;
        for (std::size_t i = 0; i < n; ++i) {
            s.lengths[i] = static_cast<int>(rest % radix);
            rest /= radix;
        }
        mu.states.push_back(std::move(s));
    }
    mu.probs.assign(count, 1.0 / static_cast<double>(count));
    return mu;
}

QueueState InitialDistribution::sample(RngStream& rng) const
{
    if (states.size() == 1)
        return states.front();
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        cumulative += probs[i];
        if (u < cumulative)
            return states[i];
    }
    return states.back();
}

} // namespace mixsched
