#pragma once

#include <filesystem>
#include <optional>

#include "dc3d/model.hpp"
#include "dc3d/tensor.hpp"

namespace dc3d::ckpt {

constexpr int kFormatVersion = 1;

/// Single-file checkpoint: a text manifest (format version, hyperparameters,
/// vocabulary, ordered name/shape/byte-offset entries) followed by the raw
/// 32-bit little-endian arrays in manifest order. Round-trips bit-exactly.
void save_checkpoint(model::Model& model, const std::filesystem::path& path,
                     const diff::AdamState* optimizer = nullptr);

struct LoadedCheckpoint {
  model::Model model;
  std::optional<diff::AdamState> optimizer;
};

/// FormatError on malformed/truncated files, CompatibilityError on a
/// version or shape mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dc3d::ckpt
