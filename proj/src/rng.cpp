#include "mixsched/rng.hpp"

namespace mixsched {

std::uint64_t fnv1a(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void Xoshiro256::seed(std::uint64_t seed)
{
    for (auto& word : s_) {
        seed += 0x9e3779b97f4a7c15ULL;
        word = splitmix64(seed);
    }
}

RngStream::RngStream(std::uint64_t seed, std::string_view name,
                     std::initializer_list<std::uint64_t> indices)
{
    std::uint64_t h = splitmix64(seed ^ splitmix64(fnv1a(name)));
    for (auto i : indices)
        h = splitmix64(h ^ splitmix64(i + 0x632be59bd9b4e019ULL));
    engine_.seed(h);
}

} // namespace mixsched
