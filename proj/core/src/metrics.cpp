#include "dtjrd/metrics.hpp"

#include <cmath>
#include <cstdlib>
#include <map>

#include "dtjrd/errors.hpp"

namespace dtjrd {

double mae_EA(std::span<const int> pred, std::span<const int> gt, std::span<const std::string> image_ids) {
  if (pred.empty()) throw ContractError("mae_EA: empty input");
  if (pred.size() != gt.size() || pred.size() != image_ids.size()) {
    throw ContractError("mae_EA: prediction, ground truth and image id lengths differ");
  }
  // Images are visited in first-appearance order so the sum order is fixed.
  std::map<std::string, std::size_t> slot;
  std::vector<double> err_sum;
  std::vector<std::size_t> count;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto [it, inserted] = slot.try_emplace(image_ids[i], err_sum.size());
    if (inserted) {
      err_sum.push_back(0.0);
      count.push_back(0);
    }
    err_sum[it->second] += std::abs(pred[i] - gt[i]);
    ++count[it->second];
  }
  double total = 0.0;
  for (std::size_t j = 0; j < err_sum.size(); ++j) total += err_sum[j] / static_cast<double>(count[j]);
  return total / static_cast<double>(err_sum.size());
}

double mae_range(std::span<const int> pred, std::span<const int> gt, int lo, int hi) {
  if (pred.size() != gt.size()) throw ContractError("mae_range: prediction and ground truth lengths differ");
  if (lo > hi) throw ContractError("mae_range: empty range");
  double err = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] < lo || gt[i] > hi) continue;
    err += std::abs(pred[i] - gt[i]);
    ++n;
  }
  if (n == 0) {
    throw ContractError("mae_range: no objects with ground truth in [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
  }
  return err / static_cast<double>(n);
}

double mse(const Image& a, const Image& b) {
  if (!a.same_size(b)) throw ContractError("mse: image sizes differ");
  if (a.pixels.empty()) throw ContractError("mse: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin);
  double total = 0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    w[i] = std::exp(-x * x / (2 * kSigma * kSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable "valid" filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& k) {
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_size(b)) throw ContractError("ssim: image sizes differ");
  if (a.width < kWin || a.height < kWin) throw ContractError("ssim: images must be at least 11x11");
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);
  const auto k = gaussian_window();
  const std::size_t n = static_cast<std::size_t>(a.width) * a.height;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.pixels[i * a.channels + c];
      y[i] = b.pixels[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, a.width, a.height, k);
    const auto my = filter_valid(y, a.width, a.height, k);
    const auto sxx = filter_valid(xx, a.width, a.height, k);
    const auto syy = filter_valid(yy, a.width, a.height, k);
    const auto sxy = filter_valid(xy, a.width, a.height, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

double r_squared(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("r_squared: lengths differ");
  if (x.size() < 2) throw ContractError("r_squared: needs at least 2 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) throw ContractError("r_squared: zero variance, correlation undefined");
  return (sxy * sxy) / (sxx * syy);
}

DeltaReport delta_metrics(std::span<const CodedPair> pairs) {
  if (pairs.size() < 2) throw ContractError("delta_metrics: needs at least 2 pairs");
  DeltaReport r;
  std::vector<double> gt, pred;
  for (const auto& p : pairs) {
    r.abs_dpsnr += std::abs(p.psnr_gt - p.psnr_pred);
    r.abs_dssim += std::abs(p.ssim_gt - p.ssim_pred);
    r.abs_drate += std::abs(p.rate_gt - p.rate_pred);
    gt.push_back(p.psnr_gt);
    pred.push_back(p.psnr_pred);
  }
  const double n = static_cast<double>(pairs.size());
  r.abs_dpsnr /= n;
  r.abs_dssim /= n;
  r.abs_drate /= n;
  r.r2 = r_squared(pred, gt);
  return r;
}

}  // namespace dtjrd
