// Test-only reference implementations, written independently of the library
// paths they check: plain nested loops, no shared helpers with src/.
#pragma once

#include <cmath>
#include <vector>

#include "sargan/rng.hpp"
#include "sargan/tensor.hpp"

namespace oracle {

using sargan::Real;
using sargan::Tensor;

inline Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    sargan::SplitMix64 rng(seed);
    for (auto& v : t.values) v = static_cast<Real>(rng.next_uniform(lo, hi));
    return t;
}

// Pushes values away from zero so kinked ops (relu, abs) stay finite-difference safe.
inline Tensor random_tensor_nokink(std::vector<int> shape, std::uint64_t seed) {
    Tensor t = random_tensor(std::move(shape), seed);
    for (auto& v : t.values) {
        if (v >= 0 && v < Real(0.05)) v += Real(0.1);
        if (v < 0 && v > Real(-0.05)) v -= Real(0.1);
    }
    return t;
}

// Direct sextuple-loop cross-correlation.
inline Tensor conv2d_reference(const Tensor& x, const Tensor& k, const Tensor* bias, int stride,
                               int pad) {
    const int N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int Cout = k.shape[0], KH = k.shape[2], KW = k.shape[3];
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    Tensor out({N, Cout, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = bias ? static_cast<double>(bias->values[co]) : 0.0;
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ih = oh * stride + kh - pad;
                                const int iw = ow * stride + kw - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += static_cast<double>(x.at(n, ci, ih, iw)) *
                                       static_cast<double>(k.at(co, ci, kh, kw));
                            }
                    out.at(n, co, oh, ow) = static_cast<Real>(acc);
                }
    return out;
}

// Direct per-window SSIM with its own Gaussian weights.
inline double ssim_reference(const Tensor& a, const Tensor& b) {
    const int H = a.shape[1], W = a.shape[2];
    double weights[11][11];
    double wsum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double di = i - 5, dj = j - 5;
            weights[i][j] = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
            wsum += weights[i][j];
        }
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) weights[i][j] /= wsum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    int count = 0;
    for (int y = 0; y + 11 <= H; ++y)
        for (int x = 0; x + 11 <= W; ++x) {
            double mx = 0, my = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    mx += weights[i][j] * a.at(0, y + i, x + j);
                    my += weights[i][j] * b.at(0, y + i, x + j);
                }
            double sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double da = a.at(0, y + i, x + j) - mx;
                    const double db = b.at(0, y + i, x + j) - my;
                    sxx += weights[i][j] * da * da;
                    syy += weights[i][j] * db * db;
                    sxy += weights[i][j] * da * db;
                }
            total += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                     ((mx * mx + my * my + c1) * (sxx + syy + c2));
            ++count;
        }
    return total / count;
}

// Direct per-window UQI; zero-denominator windows skipped, equal-constant
// windows count as 1.
inline double uqi_reference(const Tensor& a, const Tensor& b) {
    const int H = a.shape[1], W = a.shape[2];
    constexpr int win = 8;
    constexpr double n = win * win;
    double total = 0;
    int count = 0;
    for (int y = 0; y + win <= H; ++y)
        for (int x = 0; x + win <= W; ++x) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double va = a.at(0, y + i, x + j);
                    const double vb = b.at(0, y + i, x + j);
                    sx += va;
                    sy += vb;
                    sxx += va * va;
                    syy += vb * vb;
                    sxy += va * vb;
                }
            const double mx = sx / n, my = sy / n;
            const double vx = std::max(0.0, sxx / n - mx * mx);
            const double vy = std::max(0.0, syy / n - my * my);
            const double cxy = sxy / n - mx * my;
            const double denom = (vx + vy) * (mx * mx + my * my);
            if (denom == 0.0) {
                if (vx + vy == 0.0 && mx == my) {
                    total += 1.0;
                    ++count;
                }
                continue;
            }
            total += 4.0 * cxy * mx * my / denom;
            ++count;
        }
    return count ? total / count : 0.0;
}

// Scalar-loop Lee/Kuan with mirror borders; the same statistic formulas as
// the production filter but window sums gathered by direct iteration.
inline Tensor local_filter_reference(const Tensor& noisy, int window, int looks, bool kuan) {
    const int H = noisy.shape[1], W = noisy.shape[2];
    const int r = window / 2;
    const auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    const double nwin = static_cast<double>(window) * window;
    const double cu2 = 1.0 / looks;
    Tensor out(noisy.shape);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s1 = 0, s2 = 0;
            for (int i = -r; i <= r; ++i)
                for (int j = -r; j <= r; ++j) {
                    const double v = noisy.at(0, reflect(y + i, H), reflect(x + j, W));
                    s1 += v;
                    s2 += v * v;
                }
            const double m = s1 / nwin;
            const double v = s2 / nwin - m * m;
            const double cy2 = m == 0.0 ? 0.0 : v / (m * m);
            double k = 0.0;
            if (cy2 > 0.0) {
                k = kuan ? (1.0 - cu2 / cy2) / (1.0 + cu2) : 1.0 - cu2 / cy2;
                k = std::min(1.0, std::max(0.0, k));
            }
            const double yv = noisy.at(0, y, x);
            out.at(0, y, x) = static_cast<Real>(m + k * (yv - m));
        }
    return out;
}

} // namespace oracle
