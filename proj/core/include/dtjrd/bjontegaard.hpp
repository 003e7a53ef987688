#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dtjrd {

struct RatePoint {
  double rate = 0;    // bits per pixel
  double metric = 0;  // percentage (mAP) or dB
};

/// At least four points with positive, strictly increasing rate.
struct RateAccuracyCurve {
  std::vector<RatePoint> points;

  void validate() const;
};

/// Reads a CSV with columns rate_bpp and metric (extra columns ignored);
/// points are sorted by rate.
RateAccuracyCurve load_curve_csv(const std::filesystem::path& path);
void save_curve_csv(const RateAccuracyCurve& curve, const std::filesystem::path& path);

struct BdResult {
  double value = 0;
  std::vector<std::string> warnings;
};

/// Average rate difference of `test` against `anchor` in percent, from
/// cubic fits of log10(rate) over the overlapping metric interval.
BdResult bd_rate(const RateAccuracyCurve& anchor, const RateAccuracyCurve& test);

/// Average metric difference (test - anchor) over the overlapping
/// log10(rate) interval, from cubic fits of metric against log10(rate).
BdResult bd_metric(const RateAccuracyCurve& anchor, const RateAccuracyCurve& test);

inline constexpr const char* kBjontegaardMethod = "cubic-polynomial";

}  // namespace dtjrd
