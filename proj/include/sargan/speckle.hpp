#pragma once

#include <cstdint>
#include <vector>

#include "sargan/tensor.hpp"

namespace sargan {

struct SpeckleParams {
    int looks = 1;          // L >= 1
    std::uint64_t seed = 0; // SplitMix64 stream seed
};

// Density of the unit-mean Gamma fading variable with variance 1/L:
// L^L * f^(L-1) * exp(-L f) / Gamma(L). DomainError for f < 0 or L < 1.
double gamma_pdf(double f, int looks);

// I.i.d. field of Gamma(L, 1/L) draws, one per element; for integer L each
// draw is the mean of L unit exponentials. Deterministic per seed.
Tensor sample_speckle(const std::vector<int>& shape, const SpeckleParams& params);

// Y = F (.) X. Clean values are expected in [0,1]; when clamp_output is set
// the product is clamped back to [0,1] for storage, otherwise it is returned
// raw for metric and training math.
Tensor apply_speckle(const Tensor& clean, const Tensor& field, bool clamp_output = false);

} // namespace sargan
