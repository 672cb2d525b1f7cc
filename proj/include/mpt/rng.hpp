#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mpt {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Splittable counter scheme: child seeds are a pure function of
// (base seed, tag, index), so any sub-run can be re-derived in isolation.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a over the tag
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(base ^ splitmix64(h + 0x9e3779b97f4a7c15ULL * (index + 1)));
}

// mt19937_64 raw draws with hand-rolled mappings. The standard distributions
// are implementation-defined, these mappings are not, so streams replay
// bit-identically everywhere.
class rng {
public:
    explicit rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), n > 0
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>((static_cast<__uint128_t>(gen_()) * static_cast<__uint128_t>(n)) >> 64);
    }

private:
    std::mt19937_64 gen_;
};

} // namespace mpt
