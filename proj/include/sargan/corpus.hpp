#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sargan/tensor.hpp"

namespace sargan {

// Self-contained color test images: gradient background, a few colored
// shapes, optional sinusoidal texture. Deterministic per seed.
Tensor procedural_image(std::uint64_t seed, int size);
std::vector<Tensor> procedural_corpus(int count, int size, std::uint64_t seed);

// Line-oriented UTF-8 manifest: '#' header comments carrying seed and looks,
// then one "clean_path TAB gray_path TAB speckled_path" triple per line.
// Paths are stored relative to the manifest's directory.
struct ManifestEntry {
    std::string clean, gray, speckled;
};

struct Manifest {
    int looks = 1;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> entries;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

} // namespace sargan
