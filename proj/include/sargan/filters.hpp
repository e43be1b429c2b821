#pragma once

#include "sargan/tensor.hpp"

namespace sargan {

struct FilterConfig {
    int window = 7; // odd, >= 3
    int looks = 1;  // L >= 1
};

// Local-statistics despeckling filters on single-channel images {1,H,W}.
// Per pixel, with window mean m and variance v: Cy2 = v/m^2, Cu2 = 1/L, and
// output m + k*(y - m) with the filter's gain k clamped to [0,1]. Borders
// use mirror padding.
//
// Lee:  k = 1 - Cu2/Cy2
// Kuan: k = (1 - Cu2/Cy2) / (1 + Cu2)
Tensor lee_filter(const Tensor& noisy, const FilterConfig& cfg);
Tensor kuan_filter(const Tensor& noisy, const FilterConfig& cfg);

} // namespace sargan
