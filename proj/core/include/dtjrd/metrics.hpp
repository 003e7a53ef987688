#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dtjrd/image.hpp"

namespace dtjrd {

/// Per-image mean absolute JRD error, averaged over images (each image
/// weighs the same regardless of its object count).
double mae_EA(std::span<const int> pred, std::span<const int> gt, std::span<const std::string> image_ids);

/// Object-weighted mean absolute error over objects whose ground truth lies
/// in [lo, hi].
double mae_range(std::span<const int> pred, std::span<const int> gt, int lo = 27, int hi = 51);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(255^2 / MSE) over all samples; +inf when identical.
double psnr(const Image& a, const Image& b);
double psnr_from_mse(double mse);
double mse(const Image& a, const Image& b);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
/// L 255, over valid window positions; averaged over channels.
double ssim(const Image& a, const Image& b);

/// Codec outcome of one object under ground-truth and predicted JRD.
struct CodedPair {
  double psnr_gt = 0, psnr_pred = 0;
  double ssim_gt = 0, ssim_pred = 0;
  double rate_gt = 0, rate_pred = 0;
};

struct DeltaReport {
  double abs_dpsnr = 0;
  double abs_dssim = 0;
  double abs_drate = 0;
  double r2 = 0;  // squared Pearson correlation of the two PSNR sequences
};

DeltaReport delta_metrics(std::span<const CodedPair> pairs);

/// Squared Pearson correlation; ContractError on < 2 samples or zero variance.
double r_squared(std::span<const double> x, std::span<const double> y);

}  // namespace dtjrd
