#pragma once

#include <filesystem>
#include <string>

#include "sargan/tensor.hpp"

namespace sargan {

// BT.601 luminance projection {3,H,W} -> {1,H,W}: 0.299 R + 0.587 G + 0.114 B.
Tensor gray_bt601(const Tensor& rgb);

Tensor clamp01(const Tensor& img);

// Binary PGM (P5, single channel) and PPM (P6, RGB), 8- or 16-bit, values
// mapped from/to [0,1]. 16-bit samples are big-endian per the PNM spec.
void write_pnm(const std::filesystem::path& path, const Tensor& img, int bits = 8);
Tensor read_pnm(const std::filesystem::path& path);

// Raw tensor dump for loss-free round-trips: magic "SGTENS01", u32 rank,
// u64 extents, f64 values, all little-endian.
void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);

} // namespace sargan
