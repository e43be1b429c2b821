#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sargan/filters.hpp"
#include "sargan/speckle.hpp"

using namespace sargan;

TEST_CASE("filters are the identity on constant images") {
    const Tensor flat = Tensor::full({1, 9, 9}, Real(0.5));
    const FilterConfig cfg{7, 1};
    CHECK(lee_filter(flat, cfg).values == flat.values);
    CHECK(kuan_filter(flat, cfg).values == flat.values);
}

TEST_CASE("filters approach the identity in the noiseless limit") {
    const Tensor noisy = oracle::random_tensor({1, 12, 12}, 101, 0.2, 0.9);
    const FilterConfig cfg{5, 1000000000}; // Cu -> 0
    const Tensor lee = lee_filter(noisy, cfg);
    const Tensor kuan = kuan_filter(noisy, cfg);
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        CHECK(std::abs(lee.values[i] - noisy.values[i]) < 1e-6);
        CHECK(std::abs(kuan.values[i] - noisy.values[i]) < 1e-6);
    }
}

TEST_CASE("filters match the scalar-loop reference exactly on a 5x5 patch") {
    // eighths: every window sum is exactly representable, so the integral
    // image route and the direct route agree bit for bit
    Tensor patch({1, 5, 5});
    SplitMix64 rng(55);
    for (auto& v : patch.values) v = static_cast<Real>(rng.next_u64() % 9) / Real(8);
    for (const int looks : {1, 4}) {
        const FilterConfig cfg{3, looks};
        const Tensor lee = lee_filter(patch, cfg);
        const Tensor lee_ref = oracle::local_filter_reference(patch, 3, looks, false);
        CHECK(lee.values == lee_ref.values);
        const Tensor kuan = kuan_filter(patch, cfg);
        const Tensor kuan_ref = oracle::local_filter_reference(patch, 3, looks, true);
        CHECK(kuan.values == kuan_ref.values);
    }
}

TEST_CASE("filters match the reference within tolerance on random images") {
    const Tensor img = oracle::random_tensor({1, 20, 17}, 102, 0.0, 1.0);
    const FilterConfig cfg{7, 4};
    const Tensor lee = lee_filter(img, cfg);
    const Tensor ref = oracle::local_filter_reference(img, 7, 4, false);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(lee.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-10));
}

TEST_CASE("kuan gain never exceeds lee gain pixelwise") {
    // |out - m| = k |y - m| and kuan's k carries the extra 1 + Cu^2 divisor
    const Tensor gray = Tensor::full({1, 16, 16}, Real(0.6));
    const Tensor field = sample_speckle(gray.shape, SpeckleParams{1, 9});
    const Tensor noisy = apply_speckle(gray, field, false);
    const Tensor lee = lee_filter(noisy, FilterConfig{5, 1});
    const Tensor kuan = kuan_filter(noisy, FilterConfig{5, 1});
    const auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            double m = 0;
            for (int i = -2; i <= 2; ++i)
                for (int j = -2; j <= 2; ++j) m += noisy.at(0, reflect(y + i, 16), reflect(x + j, 16));
            m /= 25.0;
            CHECK(std::abs(kuan.at(0, y, x) - m) <= std::abs(lee.at(0, y, x) - m) + 1e-12);
        }
}

TEST_CASE("filters reduce variance on speckled flat regions") {
    const Tensor gray = Tensor::full({1, 32, 32}, Real(0.5));
    const Tensor field = sample_speckle(gray.shape, SpeckleParams{1, 11});
    const Tensor noisy = apply_speckle(gray, field, false);
    const auto variance = [](const Tensor& t) {
        double mean = 0;
        for (Real v : t.values) mean += v;
        mean /= static_cast<double>(t.size());
        double var = 0;
        for (Real v : t.values) var += (v - mean) * (v - mean);
        return var / static_cast<double>(t.size());
    };
    const FilterConfig cfg{7, 1};
    CHECK(variance(lee_filter(noisy, cfg)) < variance(noisy));
    CHECK(variance(kuan_filter(noisy, cfg)) < variance(noisy));
}

TEST_CASE("filter output stays inside the local window hull") {
    const Tensor img = oracle::random_tensor({1, 15, 15}, 103, 0.0, 1.0);
    const FilterConfig cfg{5, 2};
    const Tensor lee = lee_filter(img, cfg);
    const Tensor kuan = kuan_filter(img, cfg);
    const auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 15; ++x) {
            double lo = 1e30, hi = -1e30;
            for (int i = -2; i <= 2; ++i)
                for (int j = -2; j <= 2; ++j) {
                    const double v = img.at(0, reflect(y + i, 15), reflect(x + j, 15));
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            CHECK(lee.at(0, y, x) >= lo - 1e-12);
            CHECK(lee.at(0, y, x) <= hi + 1e-12);
            CHECK(kuan.at(0, y, x) >= lo - 1e-12);
            CHECK(kuan.at(0, y, x) <= hi + 1e-12);
        }
}

TEST_CASE("filters reject bad inputs") {
    CHECK_THROWS_AS(lee_filter(Tensor::ones({3, 5, 5}), FilterConfig{}), ContractError);
    CHECK_THROWS_AS(lee_filter(Tensor::ones({1, 5, 5}), FilterConfig{4, 1}), ContractError);
    CHECK_THROWS_AS(kuan_filter(Tensor::ones({1, 5, 5}), FilterConfig{7, 0}), ContractError);
}
