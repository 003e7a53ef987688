#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtjrd/detection.hpp"
#include "dtjrd/image.hpp"

namespace dtjrd {

inline constexpr int kCtuSize = 64;
inline constexpr int kMaxQp = 63;

enum class CtuKind { kBackground, kObject };

const char* ctu_kind_name(CtuKind k);

/// CTU partition of an image with, per cell, the objects whose bbox overlaps
/// it with positive area.
struct CtuGrid {
  int image_w = 0, image_h = 0, ctu = kCtuSize;
  int rows = 0, cols = 0;
  std::vector<CtuKind> kind;                      // row-major
  std::vector<std::vector<std::size_t>> objects;  // indices into the bbox list

  CtuKind at(int r, int c) const { return kind[static_cast<std::size_t>(r) * cols + c]; }
};

CtuGrid classify_ctus(int width, int height, std::span<const Box> bboxes, int ctu = kCtuSize);

struct QpMap {
  int image_w = 0, image_h = 0, ctu = kCtuSize;
  int rows = 0, cols = 0;
  std::vector<int> qp;  // row-major
  std::vector<CtuKind> kind;

  int at(int r, int c) const { return qp[static_cast<std::size_t>(r) * cols + c]; }
  /// Geometry, QP range, and object QP <= every background QP.
  void validate() const;
  bool operator==(const QpMap&) const = default;

  static QpMap uniform(int width, int height, int qp, int ctu = kCtuSize);
};

struct QpAssignment {
  QpMap map;
  int qp_b = 0;  // background QP after any repair
  std::vector<std::string> warnings;
};

/// Object cells: clamp(min JRD over overlapping objects + delta_qp, 0, 63).
/// Background cells: qp_b, raised to the largest object QP when lower.
QpAssignment assign_qps(const CtuGrid& grid, std::span<const int> jrd_per_object, int delta_qp, int qp_b);

/// Sidecar text: "w h ctu" then one "row col qp kind" line per cell.
void save_qpmap(const QpMap& map, const std::filesystem::path& path);
QpMap load_qpmap(const std::filesystem::path& path);

struct Plane {
  int width = 0, height = 0;
  std::vector<std::uint8_t> samples;

  std::uint8_t at(int x, int y) const { return samples[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Plane&) const = default;
};

/// Full-range BT.601 with 2x2 box-averaged chroma. Odd sizes are padded by
/// edge replication; orig_w/orig_h keep the source size.
struct Yuv420 {
  Plane y, u, v;
  int orig_w = 0, orig_h = 0;
  bool padded = false;
};

Yuv420 rgb_to_yuv420(const Image& rgb);
/// Bilinear chroma upsampling; crops back to the original size.
Image yuv420_to_rgb(const Yuv420& yuv);

/// Quantizer step for a QP: 2^((QP - 4) / 6).
double qstep(int qp);

inline constexpr int kCtuHeaderBits = 6;

struct PlaneCode {
  std::uint64_t bits = 0;
  Plane reconstruction;
};

/// Intra proxy codec: orthonormal 8x8 DCT per block, uniform quantization at
/// the CTU's QP, and per CTU a header of kCtuHeaderBits plus the zero-order
/// entropy of its quantized coefficients, rounded up. `ctu` is the cell size
/// in this plane (32 for 4:2:0 chroma of a 64-pixel luma grid).
PlaneCode proxy_encode(const Plane& plane, const QpMap& map, int ctu = 0);

struct CodecOutput {
  std::uint64_t bits = 0;
  Image reconstruction;
};

class CodecAdapter {
 public:
  virtual ~CodecAdapter() = default;
  virtual CodecOutput encode(const Image& image, const QpMap& map) = 0;
  virtual std::string name() const = 0;
};

/// YUV420 conversion, proxy_encode on each plane, conversion back to RGB.
class ProxyCodec final : public CodecAdapter {
 public:
  CodecOutput encode(const Image& image, const QpMap& map) override;
  std::string name() const override { return "proxy"; }
};

/// Runs an external encoder through a shell command template with the
/// placeholders {input}, {qpmap}, {output} and optionally {bits}. Without
/// {bits}, the rate is 8 x the size of the produced output file.
class ExternalCodec final : public CodecAdapter {
 public:
  explicit ExternalCodec(std::string command_template, std::filesystem::path work_root = {});
  CodecOutput encode(const Image& image, const QpMap& map) override;
  std::string name() const override { return "external"; }

 private:
  std::string template_;
  std::filesystem::path work_root_;
  std::uint64_t calls_ = 0;
};

/// One source image and its objects for the coding pipeline.
struct PipelineImage {
  std::string image_id;
  std::filesystem::path path;
  std::vector<std::string> object_ids;
  std::vector<Box> boxes;
  std::vector<int> jrd;
};

struct SettingResult {
  int base_qp = 0;
  int delta_qp = 0;
  double mean_bpp = 0;
  double object_psnr = 0;  // PSNR over object-CTU pixels of all images
  std::uint64_t total_bits = 0;
  std::vector<std::string> warnings;
};

struct RateAccuracyOptions {
  std::optional<std::filesystem::path> output_dir;  // reconstructions + QP maps per setting
  int threads = 0;                                 // 0: single-threaded
};

/// Encodes every image at every (base_qp, delta_qp) with qp_b = base_qp.
std::vector<SettingResult> run_rate_accuracy(const std::vector<PipelineImage>& images, std::span<const int> base_qps,
                                             std::span<const int> delta_qps, CodecAdapter& codec,
                                             const RateAccuracyOptions& options = {});

/// Table "base_qp,delta_qp,rate_bpp,metric".
void save_settings_csv(const std::vector<SettingResult>& rows, const std::filesystem::path& path);

}  // namespace dtjrd
