#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace skillstack {

// Deterministic seed derivation. All randomness in the project flows from an
// explicit root seed through named child streams; nothing reads the clock.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t s = root ^ (0x6a09e667f3bcc909ULL + fnv1a64(tag));
    std::uint64_t mixed = splitmix64(s);
    s ^= index * 0x9e3779b97f4a7c15ULL;
    return mixed ^ splitmix64(s);
}

// Thin wrapper over mt19937_64 with portable uniform draws (the standard
// pins the engine's sequence; std::uniform_real_distribution is not pinned,
// so doubles are produced from raw bits instead).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = n * ((~0ULL) / n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    Rng child(std::string_view tag, std::uint64_t index = 0) {
        return Rng(derive_seed(next_u64(), tag, index));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace skillstack
