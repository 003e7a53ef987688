#include "dtjrd/bjontegaard.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dtjrd/errors.hpp"

namespace dtjrd {

namespace {

// Least-squares cubic through (x, y); coefficients low order first.
Eigen::Vector4d fit_cubic(const std::vector<double>& x, const std::vector<double>& y) {
  Eigen::MatrixXd a(x.size(), 4);
  Eigen::VectorXd b(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    a(static_cast<Eigen::Index>(i), 0) = 1.0;
    a(static_cast<Eigen::Index>(i), 1) = x[i];
    a(static_cast<Eigen::Index>(i), 2) = x[i] * x[i];
    a(static_cast<Eigen::Index>(i), 3) = x[i] * x[i] * x[i];
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  return a.colPivHouseholderQr().solve(b);
}

double integral(const Eigen::Vector4d& c, double lo, double hi) {
  auto antideriv = [&](double x) {
    return c(0) * x + c(1) * x * x / 2.0 + c(2) * x * x * x / 3.0 + c(3) * x * x * x * x / 4.0;
  };
  return antideriv(hi) - antideriv(lo);
}

void check_monotone(const RateAccuracyCurve& c, const char* label, std::vector<std::string>& warnings) {
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    if (c.points[i].metric < c.points[i - 1].metric) {
      warnings.push_back(std::string(label) + " curve metric is not monotone in rate; fit proceeds");
      return;
    }
  }
}

// Mean of (f_test - f_anchor) over the overlap of the two abscissa ranges.
double mean_fit_difference(const std::vector<double>& xa, const std::vector<double>& ya,
                           const std::vector<double>& xt, const std::vector<double>& yt) {
  const double lo = std::max(*std::min_element(xa.begin(), xa.end()), *std::min_element(xt.begin(), xt.end()));
  const double hi = std::min(*std::max_element(xa.begin(), xa.end()), *std::max_element(xt.begin(), xt.end()));
  if (!(hi > lo)) throw ContractError("bjontegaard: curves do not overlap");
  const auto pa = fit_cubic(xa, ya);
  const auto pt = fit_cubic(xt, yt);
  return (integral(pt, lo, hi) - integral(pa, lo, hi)) / (hi - lo);
}

}  // namespace

void RateAccuracyCurve::validate() const {
  if (points.size() < 4) throw ContractError("rate-accuracy curve needs at least 4 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].rate > 0) || !std::isfinite(points[i].rate)) {
      throw ContractError("rate-accuracy curve: rates must be positive");
    }
    if (!std::isfinite(points[i].metric)) throw ContractError("rate-accuracy curve: metric must be finite");
    if (i > 0 && !(points[i].rate > points[i - 1].rate)) {
      throw ContractError("rate-accuracy curve: rates must be strictly increasing");
    }
  }
}

RateAccuracyCurve load_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty curve file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  const auto rate_col = std::find(cols.begin(), cols.end(), "rate_bpp") - cols.begin();
  const auto metric_col = std::find(cols.begin(), cols.end(), "metric") - cols.begin();
  if (rate_col == static_cast<std::ptrdiff_t>(cols.size()) || metric_col == static_cast<std::ptrdiff_t>(cols.size())) {
    throw FormatError(path.string() + ": header must contain rate_bpp and metric");
  }
  RateAccuracyCurve curve;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) f.push_back(c);
    try {
      curve.points.push_back({std::stod(f.at(static_cast<std::size_t>(rate_col))),
                              std::stod(f.at(static_cast<std::size_t>(metric_col)))});
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const RatePoint& a, const RatePoint& b) { return a.rate < b.rate; });
  return curve;
}

void save_curve_csv(const RateAccuracyCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "rate_bpp,metric\n" << std::setprecision(17);
  for (const auto& p : curve.points) out << p.rate << ',' << p.metric << '\n';
}

BdResult bd_rate(const RateAccuracyCurve& anchor, const RateAccuracyCurve& test) {
  anchor.validate();
  test.validate();
  BdResult r;
  check_monotone(anchor, "anchor", r.warnings);
  check_monotone(test, "test", r.warnings);
  std::vector<double> ma, la, mt, lt;
  for (const auto& p : anchor.points) {
    ma.push_back(p.metric);
    la.push_back(std::log10(p.rate));
  }
  for (const auto& p : test.points) {
    mt.push_back(p.metric);
    lt.push_back(std::log10(p.rate));
  }
  const double avg_log_diff = mean_fit_difference(ma, la, mt, lt);
  r.value = (std::pow(10.0, avg_log_diff) - 1.0) * 100.0;
  return r;
}

BdResult bd_metric(const RateAccuracyCurve& anchor, const RateAccuracyCurve& test) {
  anchor.validate();
  test.validate();
  BdResult r;
  check_monotone(anchor, "anchor", r.warnings);
  check_monotone(test, "test", r.warnings);
  std::vector<double> ma, la, mt, lt;
  for (const auto& p : anchor.points) {
    ma.push_back(p.metric);
    la.push_back(std::log10(p.rate));
  }
  for (const auto& p : test.points) {
    mt.push_back(p.metric);
    lt.push_back(std::log10(p.rate));
  }
  r.value = mean_fit_difference(la, ma, lt, mt);
  return r;
}

}  // namespace dtjrd
