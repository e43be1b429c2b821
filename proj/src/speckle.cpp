#include "sargan/speckle.hpp"

#include <cmath>

#include "sargan/rng.hpp"

namespace sargan {

double gamma_pdf(double f, int looks) {
    if (f < 0) throw DomainError("gamma_pdf: f must be >= 0");
    if (looks < 1) throw DomainError("gamma_pdf: looks must be >= 1");
    const double L = static_cast<double>(looks);
    if (f == 0) return looks == 1 ? 1.0 : 0.0; // L*f^(L-1) limit
    return std::exp(L * std::log(L) + (L - 1) * std::log(f) - L * f - std::lgamma(L));
}

Tensor sample_speckle(const std::vector<int>& shape, const SpeckleParams& params) {
    if (params.looks < 1) throw DomainError("sample_speckle: looks must be >= 1");
    Tensor field(shape);
    SplitMix64 rng(params.seed);
    const Real inv_looks = Real(1) / static_cast<Real>(params.looks);
    for (auto& v : field.values) {
        double acc = 0;
        for (int l = 0; l < params.looks; ++l) acc += rng.next_exponential();
        v = static_cast<Real>(acc) * inv_looks;
    }
    return field;
}

Tensor apply_speckle(const Tensor& clean, const Tensor& field, bool clamp_output) {
    check_same_shape(clean, field, "apply_speckle");
    Tensor out = clean;
    for (std::size_t i = 0; i < out.size(); ++i) {
        Real v = clean.values[i] * field.values[i];
        if (clamp_output) v = std::min(Real(1), std::max(Real(0), v));
        out.values[i] = v;
    }
    return out;
}

} // namespace sargan
