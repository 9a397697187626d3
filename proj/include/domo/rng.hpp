#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace domo {

// Named random streams. Every consumer of randomness derives its own stream
// from (experiment seed, purpose, client id, round), so draws are identical
// no matter which worker executes them or in which order. Distributions are
// hand-rolled on top of mt19937_64 raw output; the standard library ones are
// implementation-defined and would break replay across toolchains.

enum class StreamKind : std::uint64_t {
    Partition = 0x70617274,      // shard allocation
    Batch = 0x62617463,          // per (client, round) minibatch draws
    Participation = 0x73656c63,  // client subset per round
    Synthetic = 0x73796e74,      // dataset generation
    Init = 0x696e6974,           // model initialisation
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

inline std::uint64_t derive_stream_key(std::uint64_t seed, StreamKind kind,
                                       std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t state = seed;
    std::uint64_t key = detail::splitmix64(state);
    state ^= static_cast<std::uint64_t>(kind);
    key ^= detail::splitmix64(state);
    state ^= a + 0x9e3779b97f4a7c15ULL;
    key ^= detail::splitmix64(state);
    state ^= b + 0xd1b54a32d192ed03ULL;
    key ^= detail::splitmix64(state);
    return key;
}

class RngStream {
public:
    explicit RngStream(std::uint64_t key) : gen_(key) {}

    RngStream(std::uint64_t seed, StreamKind kind, std::uint64_t a = 0, std::uint64_t b = 0)
        : gen_(derive_stream_key(seed, kind, a, b)) {}

    std::uint64_t next_u64() { return gen_(); }

    // Unbiased integer in [0, n) by rejection of the biased tail.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
        const std::uint64_t threshold = (~n + 1) % n;  // (2^64 - n) mod n
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal, Box-Muller with the second value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace domo
