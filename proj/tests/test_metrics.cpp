#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "sargan/filters.hpp"
#include "sargan/metrics.hpp"
#include "sargan/speckle.hpp"

using namespace sargan;

TEST_CASE("psnr point values") {
    const Tensor a = oracle::random_tensor({1, 8, 8}, 201, 0, 1);
    CHECK(psnr(a, a) == doctest::Approx(100.0)); // zero-error cap

    // peak 1, MSE 0.01 -> exactly 20 dB
    Tensor ref = Tensor::zeros({1, 10, 10});
    Tensor est = Tensor::full({1, 10, 10}, Real(0.1));
    CHECK(psnr(est, ref) == doctest::Approx(20.0).epsilon(1e-12));

    CHECK_THROWS_AS(psnr(a, Tensor::ones({1, 4, 4})), DimensionError);
    CHECK_THROWS_AS(psnr(a, a, 0.0), DomainError);
}

TEST_CASE("psnr decreases as noise grows") {
    const Tensor ref = oracle::random_tensor({1, 12, 12}, 202, 0.2, 0.8);
    const Tensor noise = oracle::random_tensor({1, 12, 12}, 203, -0.05, 0.05);
    double last = 1e9;
    for (const double scale : {0.5, 1.0, 2.0, 4.0}) {
        Tensor est = ref;
        for (std::size_t i = 0; i < est.size(); ++i)
            est.values[i] += static_cast<Real>(scale) * noise.values[i];
        const double v = psnr(est, ref);
        CHECK(v < last);
        last = v;
    }
}

TEST_CASE("ssim equals one on identical images and matches the oracle") {
    const Tensor a = oracle::random_tensor({1, 32, 32}, 204, 0, 1);
    const Tensor b = oracle::random_tensor({1, 32, 32}, 205, 0, 1);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, b) == doctest::Approx(oracle::ssim_reference(a, b)).epsilon(1e-8));
    // symmetry
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    // negative of a non-constant image scores below self-similarity
    Tensor neg = a;
    for (auto& v : neg.values) v = Real(1) - v;
    CHECK(ssim(neg, a) < 1.0);
}

TEST_CASE("uqi equals one on identical images and matches the oracle") {
    const Tensor a = oracle::random_tensor({1, 32, 32}, 206, 0.1, 1);
    const Tensor b = oracle::random_tensor({1, 32, 32}, 207, 0.1, 1);
    CHECK(uqi(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(uqi(a, b) == doctest::Approx(oracle::uqi_reference(a, b)).epsilon(1e-8));
    CHECK(uqi(a, b) == doctest::Approx(uqi(b, a)).epsilon(1e-12));
    // luminance distortion: doubling a positive image is penalized
    Tensor doubled = a;
    for (auto& v : doubled.values) v *= 2;
    CHECK(uqi(doubled, a) < 1.0);
}

TEST_CASE("windowed metrics are invariant to whole-image flips of both inputs") {
    const Tensor a = oracle::random_tensor({1, 24, 24}, 208, 0, 1);
    const Tensor b = oracle::random_tensor({1, 24, 24}, 209, 0, 1);
    const auto flip = [](const Tensor& t) {
        Tensor out(t.shape);
        const int h = t.shape[1], w = t.shape[2];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(0, y, x) = t.at(0, h - 1 - y, w - 1 - x);
        return out;
    };
    CHECK(ssim(flip(a), flip(b)) == doctest::Approx(ssim(a, b)).epsilon(1e-12));
    CHECK(uqi(flip(a), flip(b)) == doctest::Approx(uqi(a, b)).epsilon(1e-12));
    CHECK(psnr(flip(a), flip(b)) == doctest::Approx(psnr(a, b)).epsilon(1e-12));
}

TEST_CASE("despeckling gain point values") {
    const Tensor ref = oracle::random_tensor({1, 8, 8}, 210, 0.2, 0.8);
    const Tensor noisy = oracle::random_tensor({1, 8, 8}, 211, 0, 1);
    CHECK(despeckling_gain(noisy, noisy, ref) == doctest::Approx(0.0)); // exact no-op
    CHECK(despeckling_gain(noisy, ref, ref) == doctest::Approx(100.0)); // perfect cap

    // halving the error amplitude divides MSE by 4 -> 10 log10 4
    Tensor halfway = ref;
    for (std::size_t i = 0; i < ref.size(); ++i)
        halfway.values[i] += (noisy.values[i] - ref.values[i]) / 2;
    CHECK(despeckling_gain(noisy, halfway, ref) ==
          doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));

    // halving the MSE itself gives 10 log10 2 ~ 3.0103 dB
    Tensor root_half = ref;
    for (std::size_t i = 0; i < ref.size(); ++i)
        root_half.values[i] +=
            (noisy.values[i] - ref.values[i]) / static_cast<Real>(std::sqrt(2.0));
    CHECK(despeckling_gain(noisy, root_half, ref) == doctest::Approx(3.0103).epsilon(1e-4));

    CHECK_THROWS_AS(despeckling_gain(ref, noisy, ref), DomainError);
}

TEST_CASE("corpus evaluation aggregates arithmetic means") {
    std::vector<EvalPair> pairs;
    for (int i = 0; i < 2; ++i) {
        EvalPair p;
        p.id = "img" + std::to_string(i);
        p.reference = oracle::random_tensor({1, 16, 16}, 220 + i, 0.2, 0.8);
        const Tensor field = sample_speckle(p.reference.shape, SpeckleParams{4, static_cast<std::uint64_t>(50 + i)});
        p.noisy = apply_speckle(p.reference, field, false);
        pairs.push_back(std::move(p));
    }
    const MetricsReport rep =
        evaluate_corpus("noisy", [](const Tensor& y) { return y; }, pairs, 4);
    REQUIRE(rep.per_image.size() == 2);
    CHECK(rep.avg_psnr ==
          doctest::Approx((rep.per_image[0].psnr + rep.per_image[1].psnr) / 2));
    CHECK(rep.avg_dg == doctest::Approx(0.0)); // identity method
    for (const auto& row : rep.per_image) CHECK(row.dg == doctest::Approx(0.0));

    CHECK_THROWS_AS(evaluate_corpus("x", [](const Tensor& y) { return y; }, {}, 1),
                    ContractError);
}

TEST_CASE("csv and table rendering") {
    MetricsReport rep;
    rep.method = "lee";
    rep.looks = 1;
    rep.per_image.push_back({"a", 21.5, 0.5, 0.45, 16.0});
    rep.per_image.push_back({"b", 22.5, 0.6, 0.55, 17.0});
    rep.finalize();
    const std::string csv = metrics_csv({rep});
    CHECK(csv.find("method,looks,image,psnr,ssim,uqi,dg\n") == 0);
    CHECK(csv.find("lee,1,a,21.5,0.5,0.45,16\n") != std::string::npos);

    const std::string table = metrics_table({rep});
    CHECK(table.find("PSNR") != std::string::npos);
    CHECK(table.find("22.00") != std::string::npos); // mean psnr, 2 decimals
    CHECK(table.find("0.550") != std::string::npos); // mean ssim, 3 decimals
}
