#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dtjrd/checkpoint.hpp"
#include "dtjrd/detection.hpp"
#include "dtjrd/image.hpp"
#include "dtjrd/tensor.hpp"

namespace dtjrd {

inline constexpr int kMaxJrd = 63;

enum class SizeClass { kSmall, kMedium, kLarge };

const char* size_class_name(SizeClass s);
/// COCO area thresholds: small < 32^2 <= medium < 96^2 <= large.
SizeClass size_class_for(const Box& bbox);

struct ObjectRecord {
  std::string object_id;
  std::string source_image_id;
  std::string image_path;  // as written in the manifest; relative paths resolve against its directory
  Box bbox;                // (x_ul, y_ul, x_lr, y_lr) in pixels
  int jrd = 0;
  std::string category;
  SizeClass size_class = SizeClass::kSmall;
};

/// JSON-lines manifest, one ObjectRecord per line.
std::vector<ObjectRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<ObjectRecord>& records, const std::filesystem::path& path);
std::filesystem::path resolve_image_path(const std::filesystem::path& manifest_dir, const ObjectRecord& r);

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);
Split parse_split(const std::string& name);

using SplitAssignment = std::map<std::string, Split>;

/// Shuffles source images with the seed and assigns whole images to the split
/// furthest below its target share, so objects of one image never straddle
/// splits.
SplitAssignment group_split(const std::vector<ObjectRecord>& records, std::array<int, 3> ratios = {8, 1, 1},
                            std::uint64_t seed = 0);

/// CSV "source_image_id,split".
void save_splits(const SplitAssignment& splits, const std::filesystem::path& path);
SplitAssignment load_splits(const std::filesystem::path& path);

std::vector<ObjectRecord> select_split(const std::vector<ObjectRecord>& records, const SplitAssignment& splits,
                                       Split which);

/// Crop to the bbox, bilinear resize to size x size, scale to [0, 1] and
/// normalize per channel. Returns planar [3, size, size].
Tensor<float> preprocess(const Image& source, const Box& bbox, std::size_t size, const Normalization& norm = {});
Tensor<float> preprocess(const ObjectRecord& record, const std::filesystem::path& manifest_dir, std::size_t size,
                         const Normalization& norm = {});

/// Label rule of the synthetic set: clamp(round(20 + 30 t), 0, 63).
int synth_jrd_rule(double texture_strength);

struct SynthObject {
  std::string object_id;
  double texture_strength;
};

struct SynthResult {
  std::vector<ObjectRecord> records;
  std::vector<SynthObject> params;
  std::filesystem::path manifest_path;
};

/// Writes n textured objects grouped onto source images under out_dir:
/// images/*.png, manifest.jsonl and synth_params.csv (object_id, texture
/// strength) so labels can be recomputed independently.
SynthResult synth_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace dtjrd
