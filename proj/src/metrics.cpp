#include "sargan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <iomanip>

#include "sargan/image.hpp"
#include "sargan/parallel.hpp"

namespace sargan {

namespace {

constexpr double kDbCap = 100.0;

double mse(const Tensor& a, const Tensor& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

Tensor to_luma(const Tensor& img) {
    if (img.rank() == 3 && img.shape[0] == 3) return gray_bt601(img);
    if (img.rank() == 3 && img.shape[0] == 1) return img;
    throw DimensionError("metric: expected {1,H,W} or {3,H,W}, got " + img.shape_str());
}

// 11x11 Gaussian, sigma 1.5, normalized to sum 1.
std::vector<double> gaussian_taps() {
    std::vector<double> w(11);
    double s = 0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        s += w[i];
    }
    for (auto& v : w) v /= s;
    return w;
}

// Separable valid-region Gaussian filter of a {H,W} plane stored flat.
std::vector<double> gauss_valid(const std::vector<double>& src, int h, int w,
                                const std::vector<double>& taps) {
    const int k = static_cast<int>(taps.size());
    const int hw = w - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * hw);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < hw; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) acc += taps[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * hw + x] = acc;
        }
    const int hh = h - k + 1;
    std::vector<double> out(static_cast<std::size_t>(hh) * hw);
    for (int y = 0; y < hh; ++y)
        for (int x = 0; x < hw; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) acc += taps[i] * tmp[static_cast<std::size_t>(y + i) * hw + x];
            out[static_cast<std::size_t>(y) * hw + x] = acc;
        }
    return out;
}

} // namespace

double psnr(const Tensor& estimate, const Tensor& reference, double peak) {
    check_same_shape(estimate, reference, "psnr");
    if (peak <= 0) throw DomainError("psnr: peak must be > 0");
    const double e = mse(estimate, reference);
    if (e == 0) return kDbCap;
    return std::min(kDbCap, 10.0 * std::log10(peak * peak / e));
}

double ssim(const Tensor& estimate, const Tensor& reference) {
    check_same_shape(estimate, reference, "ssim");
    const Tensor x = to_luma(estimate);
    const Tensor y = to_luma(reference);
    const int h = x.shape[1], w = x.shape[2];
    if (h < 11 || w < 11) throw DimensionError("ssim: image smaller than the 11x11 window");

    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> vx(n), vy(n), vxx(n), vyy(n), vxy(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = static_cast<double>(x.values[i]);
        const double b = static_cast<double>(y.values[i]);
        vx[i] = a;
        vy[i] = b;
        vxx[i] = a * a;
        vyy[i] = b * b;
        vxy[i] = a * b;
    }
    const auto taps = gaussian_taps();
    const auto mx = gauss_valid(vx, h, w, taps);
    const auto my = gauss_valid(vy, h, w, taps);
    const auto exx = gauss_valid(vxx, h, w, taps);
    const auto eyy = gauss_valid(vyy, h, w, taps);
    const auto exy = gauss_valid(vxy, h, w, taps);

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double sxx = exx[i] - mx[i] * mx[i];
        const double syy = eyy[i] - my[i] * my[i];
        const double sxy = exy[i] - mx[i] * my[i];
        acc += ((2 * mx[i] * my[i] + c1) * (2 * sxy + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx + syy + c2));
    }
    return acc / static_cast<double>(mx.size());
}

double uqi(const Tensor& estimate, const Tensor& reference) {
    check_same_shape(estimate, reference, "uqi");
    const Tensor xt = to_luma(estimate);
    const Tensor yt = to_luma(reference);
    const int h = xt.shape[1], w = xt.shape[2];
    constexpr int win = 8;
    if (h < win || w < win) throw DimensionError("uqi: image smaller than the 8x8 window");

    // integral images over x, y, x^2, y^2, xy
    const int pw = w + 1;
    std::vector<double> px(static_cast<std::size_t>(h + 1) * pw, 0.0), py(px.size(), 0.0),
        pxx(px.size(), 0.0), pyy(px.size(), 0.0), pxy(px.size(), 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double a = static_cast<double>(xt.values[static_cast<std::size_t>(r) * w + c]);
            const double b = static_cast<double>(yt.values[static_cast<std::size_t>(r) * w + c]);
            const std::size_t i = static_cast<std::size_t>(r + 1) * pw + c + 1;
            const std::size_t up = i - pw, left = i - 1, diag = up - 1;
            px[i] = a + px[up] + px[left] - px[diag];
            py[i] = b + py[up] + py[left] - py[diag];
            pxx[i] = a * a + pxx[up] + pxx[left] - pxx[diag];
            pyy[i] = b * b + pyy[up] + pyy[left] - pyy[diag];
            pxy[i] = a * b + pxy[up] + pxy[left] - pxy[diag];
        }
    const auto rect = [pw](const std::vector<double>& p, int r, int c) {
        const std::size_t i0 = static_cast<std::size_t>(r) * pw + c;
        const std::size_t i1 = static_cast<std::size_t>(r + win) * pw + c + win;
        return p[i1] - p[static_cast<std::size_t>(r) * pw + c + win] -
               p[static_cast<std::size_t>(r + win) * pw + c] + p[i0];
    };

    constexpr double nwin = win * win;
    double acc = 0;
    std::size_t counted = 0;
    for (int r = 0; r + win <= h; ++r)
        for (int c = 0; c + win <= w; ++c) {
            const double mx = rect(px, r, c) / nwin;
            const double my = rect(py, r, c) / nwin;
            const double sxx = std::max(0.0, rect(pxx, r, c) / nwin - mx * mx);
            const double syy = std::max(0.0, rect(pyy, r, c) / nwin - my * my);
            const double sxy = rect(pxy, r, c) / nwin - mx * my;
            const double denom = (sxx + syy) * (mx * mx + my * my);
            if (denom == 0.0) {
                if (sxx + syy == 0.0 && mx == my) {
                    acc += 1.0;
                    ++counted;
                }
                continue;
            }
            acc += 4.0 * sxy * mx * my / denom;
            ++counted;
        }
    return counted ? acc / static_cast<double>(counted) : 0.0;
}

double despeckling_gain(const Tensor& noisy, const Tensor& estimate, const Tensor& reference) {
    check_same_shape(noisy, estimate, "despeckling_gain");
    check_same_shape(noisy, reference, "despeckling_gain");
    const double mse_noisy = mse(noisy, reference);
    if (mse_noisy == 0) throw DomainError("despeckling_gain: noisy input equals the reference");
    const double mse_est = mse(estimate, reference);
    if (mse_est == 0) return kDbCap;
    return std::min(kDbCap, 10.0 * std::log10(mse_noisy / mse_est));
}

void MetricsReport::finalize() {
    avg_psnr = avg_ssim = avg_uqi = avg_dg = 0;
    if (per_image.empty()) return;
    for (const auto& r : per_image) {
        avg_psnr += r.psnr;
        avg_ssim += r.ssim;
        avg_uqi += r.uqi;
        avg_dg += r.dg;
    }
    const double n = static_cast<double>(per_image.size());
    avg_psnr /= n;
    avg_ssim /= n;
    avg_uqi /= n;
    avg_dg /= n;
}

MetricsReport evaluate_corpus(const std::string& method_name, const DespeckleMethod& method,
                              const std::vector<EvalPair>& pairs, int looks) {
    if (pairs.empty()) throw ContractError("evaluate_corpus: empty corpus");
    MetricsReport report;
    report.method = method_name;
    report.looks = looks;
    report.per_image.resize(pairs.size());
    parallel_for(0, static_cast<std::int64_t>(pairs.size()), [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) {
            const EvalPair& p = pairs[static_cast<std::size_t>(i)];
            const Tensor est = method(p.noisy);
            MetricsRow row;
            row.image = p.id;
            row.psnr = psnr(est, p.reference);
            row.ssim = ssim(est, p.reference);
            row.uqi = uqi(est, p.reference);
            row.dg = despeckling_gain(p.noisy, est, p.reference);
            report.per_image[static_cast<std::size_t>(i)] = std::move(row);
        }
    });
    report.finalize();
    return report;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
    std::ostringstream os;
    os << "method,looks,image,psnr,ssim,uqi,dg\n";
    os << std::setprecision(10);
    for (const auto& rep : reports)
        for (const auto& row : rep.per_image)
            os << rep.method << ',' << rep.looks << ',' << row.image << ',' << row.psnr << ','
               << row.ssim << ',' << row.uqi << ',' << row.dg << '\n';
    return os.str();
}

std::string metrics_table(const std::vector<MetricsReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "method" << std::right << std::setw(8) << "PSNR"
       << std::setw(8) << "SSIM" << std::setw(8) << "UQI" << std::setw(8) << "DG" << '\n';
    for (const auto& rep : reports) {
        os << std::left << std::setw(16) << rep.method << std::right << std::fixed
           << std::setprecision(2) << std::setw(8) << rep.avg_psnr << std::setprecision(3)
           << std::setw(8) << rep.avg_ssim << std::setw(8) << rep.avg_uqi << std::setprecision(2)
           << std::setw(8) << rep.avg_dg << '\n';
        os.unsetf(std::ios::fixed);
        os << std::setprecision(6);
    }
    return os.str();
}

} // namespace sargan
