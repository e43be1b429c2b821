#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sargan/tensor.hpp"

namespace sargan {

// 10*log10(peak^2 / MSE) over all channels and pixels, capped at 100 dB.
double psnr(const Tensor& estimate, const Tensor& reference, double peak = 1.0);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=0.01^2, C2=0.03^2 on
// unit dynamic range; windows fully inside the image only. Three-channel
// inputs are converted to BT.601 luminance.
double ssim(const Tensor& estimate, const Tensor& reference);

// Universal Quality Index over 8x8 sliding windows; zero-denominator windows
// are skipped except both-constant windows with equal means, which score 1.
double uqi(const Tensor& estimate, const Tensor& reference);

// 10*log10(MSE(noisy, reference) / MSE(estimate, reference)), capped at
// 100 dB; DomainError when the noisy input already equals the reference.
double despeckling_gain(const Tensor& noisy, const Tensor& estimate, const Tensor& reference);

struct MetricsRow {
    std::string image;
    double psnr = 0, ssim = 0, uqi = 0, dg = 0;
};

struct MetricsReport {
    std::string method;
    int looks = 0;
    std::vector<MetricsRow> per_image;
    double avg_psnr = 0, avg_ssim = 0, avg_uqi = 0, avg_dg = 0;

    void finalize(); // recompute the four averages
};

struct EvalPair {
    std::string id;
    Tensor noisy;     // {1,H,W}, unclamped speckled input
    Tensor reference; // {1,H,W}, clean grayscale truth
};

using DespeckleMethod = std::function<Tensor(const Tensor& noisy)>;

MetricsReport evaluate_corpus(const std::string& method_name, const DespeckleMethod& method,
                              const std::vector<EvalPair>& pairs, int looks);

// CSV with header method,looks,image,psnr,ssim,uqi,dg; one row per image.
std::string metrics_csv(const std::vector<MetricsReport>& reports);

// Aligned plain-text table, one row per method.
std::string metrics_table(const std::vector<MetricsReport>& reports);

} // namespace sargan
