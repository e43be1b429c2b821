#include "sargan/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sargan {

namespace {

int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

void validate(const Tensor& noisy, const FilterConfig& cfg) {
    if (noisy.rank() != 3 || noisy.shape[0] != 1)
        throw ContractError("filter: input must be single-channel {1,H,W}, got " +
                            noisy.shape_str());
    if (cfg.window < 3 || cfg.window % 2 == 0)
        throw ContractError("filter: window must be odd and >= 3");
    if (cfg.looks < 1) throw ContractError("filter: looks must be >= 1");
}

enum class Gain { Lee, Kuan };

// Window statistics via integral images over the mirror-padded input; one
// (sum, sum-of-squares) prefix pass, O(1) per pixel afterwards.
Tensor local_stats_filter(const Tensor& noisy, const FilterConfig& cfg, Gain gain) {
    validate(noisy, cfg);
    const int H = noisy.shape[1], W = noisy.shape[2];
    const int r = cfg.window / 2;
    const int EH = H + 2 * r, EW = W + 2 * r;

    std::vector<double> p1(static_cast<std::size_t>(EH + 1) * (EW + 1), 0.0);
    std::vector<double> p2(p1.size(), 0.0);
    const auto pidx = [EW](int y, int x) { return static_cast<std::size_t>(y) * (EW + 1) + x; };
    for (int y = 0; y < EH; ++y) {
        const int sy = reflect(y - r, H);
        for (int x = 0; x < EW; ++x) {
            const int sx = reflect(x - r, W);
            const double v = static_cast<double>(noisy.at(0, sy, sx));
            p1[pidx(y + 1, x + 1)] = v + p1[pidx(y, x + 1)] + p1[pidx(y + 1, x)] - p1[pidx(y, x)];
            p2[pidx(y + 1, x + 1)] =
                v * v + p2[pidx(y, x + 1)] + p2[pidx(y + 1, x)] - p2[pidx(y, x)];
        }
    }

    const double n_win = static_cast<double>(cfg.window) * cfg.window;
    const double cu2 = 1.0 / static_cast<double>(cfg.looks);
    Tensor out(noisy.shape);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            // window in padded coordinates: rows [y, y+2r], cols [x, x+2r]
            const double s1 = p1[pidx(y + cfg.window, x + cfg.window)] -
                              p1[pidx(y, x + cfg.window)] - p1[pidx(y + cfg.window, x)] +
                              p1[pidx(y, x)];
            const double s2 = p2[pidx(y + cfg.window, x + cfg.window)] -
                              p2[pidx(y, x + cfg.window)] - p2[pidx(y + cfg.window, x)] +
                              p2[pidx(y, x)];
            const double m = s1 / n_win;
            const double v = s2 / n_win - m * m;
            const double cy2 = m == 0.0 ? 0.0 : v / (m * m);
            double k = 0.0;
            if (cy2 > 0.0) {
                k = gain == Gain::Lee ? 1.0 - cu2 / cy2 : (1.0 - cu2 / cy2) / (1.0 + cu2);
                k = std::min(1.0, std::max(0.0, k));
            }
            const double yv = static_cast<double>(noisy.at(0, y, x));
            out.at(0, y, x) = static_cast<Real>(m + k * (yv - m));
        }
    }
    return out;
}

} // namespace

Tensor lee_filter(const Tensor& noisy, const FilterConfig& cfg) {
    return local_stats_filter(noisy, cfg, Gain::Lee);
}

Tensor kuan_filter(const Tensor& noisy, const FilterConfig& cfg) {
    return local_stats_filter(noisy, cfg, Gain::Kuan);
}

} // namespace sargan
