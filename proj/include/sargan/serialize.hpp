#pragma once

#include <filesystem>

#include "sargan/train.hpp"

namespace sargan {

// Versioned little-endian weight container. Layout:
//   magic "SARGAN01", u64 record count, then per tensor:
//   u32 name length, UTF-8 name, u32 rank, u64 extents, raw 64-bit floats.
// Loading rejects unknown magic and any name/shape that does not match the
// model's specs.
void save_weights(const std::filesystem::path& path, GanModel& model);
void load_weights(const std::filesystem::path& path, GanModel& model);

// Weight container plus a trailer ("SGTRAIL1"): epoch, step, RNG state, the
// two Adam step counters and the moment tensors. The caller provides a
// Checkpoint whose model is already built to the expected architecture.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
void load_checkpoint(const std::filesystem::path& path, Checkpoint& ck);

} // namespace sargan
