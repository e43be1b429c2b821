#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "sargan/config.hpp"
#include "sargan/corpus.hpp"
#include "sargan/image.hpp"
#include "sargan/serialize.hpp"

using namespace sargan;

namespace {
const std::filesystem::path tmp = std::filesystem::temp_directory_path();
}

TEST_CASE("pnm round trips within quantization") {
    const Tensor rgb = oracle::random_tensor({3, 7, 9}, 401, 0, 1);
    for (const int bits : {8, 16}) {
        const auto path = tmp / ("t_io_" + std::to_string(bits) + ".ppm");
        write_pnm(path, rgb, bits);
        const Tensor back = read_pnm(path);
        REQUIRE(back.shape == rgb.shape);
        const double step = bits == 8 ? 1.0 / 255 : 1.0 / 65535;
        for (std::size_t i = 0; i < rgb.size(); ++i)
            CHECK(std::abs(back.values[i] - rgb.values[i]) <= step / 2 + 1e-12);
        std::filesystem::remove(path);
    }
    const Tensor gray = oracle::random_tensor({1, 5, 5}, 402, 0, 1);
    const auto path = tmp / "t_io.pgm";
    write_pnm(path, gray, 16);
    CHECK(read_pnm(path).shape == gray.shape);
    std::filesystem::remove(path);
}

TEST_CASE("raw tensor dump is lossless") {
    const Tensor t = oracle::random_tensor({2, 3, 4, 5}, 403);
    const auto path = tmp / "t_io.ten";
    write_tensor_file(path, t);
    const Tensor back = read_tensor_file(path);
    CHECK(back.shape == t.shape);
    CHECK(back.values == t.values);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(read_tensor_file(tmp / "does_not_exist.ten"), DataError);
}

TEST_CASE("manifest round trip") {
    Manifest m;
    m.looks = 4;
    m.seed = 1234;
    m.entries.push_back({"clean_0.ten", "gray_0.ten", "speckled_0.ten"});
    m.entries.push_back({"clean_1.ten", "gray_1.ten", "speckled_1.ten"});
    const auto path = tmp / "t_manifest.tsv";
    write_manifest(path, m);
    const Manifest back = read_manifest(path);
    CHECK(back.looks == 4);
    CHECK(back.seed == 1234);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[1].speckled == "speckled_1.ten");
    std::filesystem::remove(path);
}

TEST_CASE("run config merges file and overrides") {
    RunConfig cfg({"looks", "seed", "out", "learning_rate", "despeckle_only"});
    const auto path = tmp / "t_config.cfg";
    {
        std::ofstream out(path);
        out << "# comment line\n"
            << "looks = 4\n"
            << "seed=99   # trailing comment\n"
            << "out = /tmp/x\n";
    }
    cfg.load_file(path);
    CHECK(cfg.get_int("looks", 1) == 4);
    CHECK(cfg.get_u64("seed", 0) == 99);
    cfg.set("looks", "10"); // later source wins
    CHECK(cfg.get_int("looks", 1) == 10);
    CHECK(cfg.get_double("learning_rate", 2e-4) == doctest::Approx(2e-4));
    CHECK(cfg.get_bool("despeckle_only", false) == false);
    cfg.set("despeckle_only", "true");
    CHECK(cfg.get_bool("despeckle_only", false));

    CHECK_THROWS_AS(cfg.set("unknown_key", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("out", 0), ConfigError); // not an integer
    {
        std::ofstream out(path);
        out << "mystery = 1\n";
    }
    CHECK_THROWS_AS(cfg.load_file(path), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("weight files reject corruption and mismatches") {
    GanModel m = GanModel::create_sized(7, 8, 2, 8, 2);
    const auto path = tmp / "t_weights.bin";
    save_weights(path, m);

    GanModel same = GanModel::create_sized(8, 8, 2, 8, 2);
    load_weights(path, same);
    CHECK(same.gd.layers[0].kernel.values == m.gd.layers[0].kernel.values);
    CHECK(same.d.head_weight.values == m.d.head_weight.values);

    // shape mismatch: different architecture
    GanModel bigger = GanModel::create_sized(9, 8, 3, 8, 2);
    CHECK_THROWS_AS(load_weights(path, bigger), DataError);

    // unknown magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXXXXXX", 8);
    }
    CHECK_THROWS_AS(load_weights(path, same), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("procedural corpus is deterministic and in range") {
    const auto a = procedural_corpus(3, 24, 55);
    const auto b = procedural_corpus(3, 24, 55);
    const auto c = procedural_corpus(3, 24, 56);
    REQUIRE(a.size() == 3);
    CHECK(a[0].values == b[0].values);
    CHECK(a[0].values != c[0].values);
    for (const Tensor& img : a) {
        CHECK(img.shape == std::vector<int>{3, 24, 24});
        for (Real v : img.values) {
            CHECK(v >= 0);
            CHECK(v <= 1);
        }
    }
    // images are not flat: despeckling targets need structure
    double lo = 1e9, hi = -1e9;
    for (Real v : a[0].values) {
        lo = std::min<double>(lo, v);
        hi = std::max<double>(hi, v);
    }
    CHECK(hi - lo > 0.05);
}
