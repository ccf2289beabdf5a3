#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sf {

// Splittable counter-free PRNG. One seeded root per run; children are derived
// by hashing a label into the parent state, so every module draws from its own
// stream and replays are independent of call interleaving.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : key_(splitmix(seed ^ 0x9e3779b97f4a7c15ull)), state_(key_) {}

    // The key never moves when values are drawn, so a child depends only on
    // the ancestor labels and the root seed, not on how much the parent drew.
    Rng child(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
        for (char c : label) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ull;
        }
        return Rng(key_ ^ h);
    }

    Rng child(std::string_view label, std::uint64_t index) const {
        return Rng(child(label).key_ + index * 0xbf58476d1ce4e5b9ull);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return splitmix(state_);
    }

    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; no cached spare so the stream position stays predictable.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // uniform integer in [0, n)
    std::uint64_t index(std::uint64_t n) { return n ? next_u64() % n : 0; }

private:
    static std::uint64_t splitmix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;    // fixed at construction, used only for child()
    std::uint64_t state_;  // advances as values are drawn
};

}  // namespace sf
