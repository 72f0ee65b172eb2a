#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string_view>

namespace mixsched {

// xoshiro256** (Blackman & Vigna), seeded through splitmix64.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed = 0) { this->seed(seed); }

    void seed(std::uint64_t seed);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()()
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
};

// A named, seedable random stream. Every consumer (arrivals, controller
// sampling, perturbations, ...) owns its own stream derived from
// (seed, name, indices).
class RngStream {
public:
    using engine_type = Xoshiro256;

    RngStream(std::uint64_t seed, std::string_view name,
              std::initializer_list<std::uint64_t> indices = {});

    engine_type& engine() { return engine_; }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    bool bernoulli(double p) { return uniform() < p; }

private:
    engine_type engine_;
};

std::uint64_t fnv1a(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

} // namespace mixsched
