#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace afbench {

// Deterministic splitmix64 generator. All pipeline randomness flows through
// this type; std::uniform_*_distribution is avoided because its output is
// implementation-defined and would break byte-identical reruns.
//
// Substreams are derived by hashing a string key into the seed, so jobs
// (per pairing, per tree, per choice) draw independently of each other and
// of iteration order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static Rng substream(std::uint64_t seed, std::string_view key);

    std::uint64_t next_u64();

    // Unbiased integer in [0, n). n must be > 0.
    std::uint64_t uniform(std::uint64_t n);

    // 53-bit double in [0, 1).
    double next_double();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t draws() const { return draws_; }

private:
    std::uint64_t state_ = 0;
    std::uint64_t draws_ = 0;
};

}  // namespace afbench
