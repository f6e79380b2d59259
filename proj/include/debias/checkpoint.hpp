#pragma once

#include <cstdint>
#include <filesystem>

#include "debias/encoder.hpp"

namespace debias {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t num_layers = 0;
  std::uint32_t hidden_size = 0;
  std::uint32_t prefix_length = 0;
  double lambda = 0.0;
  double rho = 0.0;
  std::uint64_t step = 0;
};

/// Binary prompt checkpoint, all fields little-endian:
///
///   bytes  0..3   magic "DBPF"
///          4..7   u32 format version
///          8..19  u32 L, u32 H, u32 k
///         20..35  f64 lambda, f64 rho
///         36..43  u64 step count
///         44..    L*2*k*H f32 prefix values, row-major (layer, key/value,
///                 position, hidden)
void write_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                      const PromptParameters& prompt);

struct Checkpoint {
  CheckpointHeader header;
  PromptParameters prompt;
};

/// Throws CheckpointError on bad magic, unknown version, or truncation.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace debias
