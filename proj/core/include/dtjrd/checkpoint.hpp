#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtjrd/model.hpp"

namespace dtjrd {

/// Pixel normalization applied before the model; stored with the weights so
/// inference matches training.
struct Normalization {
  double mean = 0.5;
  double std = 0.5;
  bool operator==(const Normalization&) const = default;
};

struct TensorEntry {
  std::string name;
  DType dtype;
  Shape shape;
  std::size_t offset;  // bytes from the start of the payload section
};

struct CheckpointHeader {
  ModelConfig config;
  Normalization normalization;
  std::vector<TensorEntry> tensors;
};

inline constexpr char kCheckpointMagic[] = "DTJRD1";

/// File layout: magic "DTJRD1", u64 little-endian header length, a JSON
/// header (config, normalization, ordered tensor manifest), then raw
/// little-endian row-major payloads in manifest order.
template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path,
                     const Normalization& norm = {});

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Loads with the stored config.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

/// Loads into `target`; a pos_embed grid that differs from the target grid is
/// bicubic-interpolated. Any other shape disagreement is a FormatError naming
/// the parameter.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& target);

}  // namespace dtjrd
