#include "afbench/rng.hpp"

#include "afbench/errors.hpp"
#include "afbench/strings.hpp"

namespace afbench {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng Rng::substream(std::uint64_t seed, std::string_view key) {
    std::uint64_t mixed = fnv1a64_mix(fnv1a64(key), seed);
    return Rng(mixed);
}

std::uint64_t Rng::next_u64() {
    ++draws_;
    return splitmix64(state_);
}

std::uint64_t Rng::uniform(std::uint64_t n) {
    if (n == 0) throw StructuralError("Rng::uniform(0)");
    if (n == 1) return 0;
    // Rejection sampling keeps the draw unbiased.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

}  // namespace afbench
