#pragma once

#include <cmath>
#include <cstdint>

namespace sargan {

// SplitMix64: the corpus-reproducibility generator used everywhere in this
// project. It is counter-based (output i is a pure function of seed and i),
// so a single uint64 state captures the full position of the stream and the
// sequence is identical on every platform. std::random distributions are
// deliberately avoided: their output is implementation-defined.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unit-mean exponential draw via inverse CDF; u < 1 so the log is finite.
    double next_exponential() {
        return -std::log1p(-next_double());
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

} // namespace sargan
