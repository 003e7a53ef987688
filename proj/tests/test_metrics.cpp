#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dtjrd/bjontegaard.hpp"
#include "dtjrd/detection.hpp"
#include "dtjrd/errors.hpp"
#include "dtjrd/metrics.hpp"
#include "test_util.hpp"

using namespace dtjrd;

namespace {

// Lagrange interpolation through exactly four points.
double lagrange4(const std::vector<double>& x, const std::vector<double>& y, double t) {
  double out = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    double term = y[i];
    for (std::size_t j = 0; j < 4; ++j) {
      if (j != i) term *= (t - x[j]) / (x[i] - x[j]);
    }
    out += term;
  }
  return out;
}

double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

RateAccuracyCurve curve(std::vector<double> rates, std::vector<double> metrics) {
  RateAccuracyCurve c;
  for (std::size_t i = 0; i < rates.size(); ++i) c.points.push_back({rates[i], metrics[i]});
  return c;
}

// Interpolated AP evaluated from scratch for each recall level.
double brute_force_ap(const std::vector<bool>& tp_in_score_order, std::size_t n_gt) {
  std::vector<double> prec, rec;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < tp_in_score_order.size(); ++k) {
    tp += tp_in_score_order[k];
    prec.push_back(static_cast<double>(tp) / (k + 1));
    rec.push_back(static_cast<double>(tp) / n_gt);
  }
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    double best = 0;
    for (std::size_t k = 0; k < prec.size(); ++k) {
      if (rec[k] >= r / 100.0 - 1e-12) best = std::max(best, prec[k]);
    }
    sum += best;
  }
  return sum / 101;
}

}  // namespace

TEST_CASE("JRD error metrics") {
  const std::vector<std::string> one{"a", "a"};
  CHECK(mae_EA(std::vector<int>{30, 32}, std::vector<int>{28, 28}, one) == 3.0);
  CHECK(mae_EA(std::vector<int>{40, 45}, std::vector<int>{37, 40}, one) == 4.0);
  // images weigh equally: (3 + 10) / 2, not 16 / 3
  CHECK(mae_EA(std::vector<int>{30, 32, 20}, std::vector<int>{28, 28, 30}, std::vector<std::string>{"a", "a", "b"}) ==
        6.5);
  CHECK(mae_range(std::vector<int>{28, 34}, std::vector<int>{30, 30}) == 3.0);
  CHECK(mae_range(std::vector<int>{28, 34, 0}, std::vector<int>{30, 30, 60}) == 3.0);
  CHECK_THROWS_AS(mae_range(std::vector<int>{1}, std::vector<int>{10}), ContractError);
  CHECK_THROWS_AS(mae_EA(std::vector<int>{}, std::vector<int>{}, std::vector<std::string>{}), ContractError);
  CHECK_THROWS_AS(mae_EA(std::vector<int>{1}, std::vector<int>{1, 2}, one), ContractError);
}

TEST_CASE("PSNR and SSIM") {
  Image a(16, 16, 3, 100), b(16, 16, 3, 101);
  CHECK(std::abs(psnr(a, b) - 20.0 * std::log10(255.0)) < 1e-9);
  CHECK(psnr(a, a) == kPsnrIdentical);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);

  // constant images: only the luminance term differs from one
  Image c(20, 20, 1, 50), d(20, 20, 1, 90);
  const double c1 = std::pow(0.01 * 255, 2);
  const double expect = (2.0 * 50 * 90 + c1) / (50.0 * 50 + 90.0 * 90 + c1);
  CHECK(std::abs(ssim(c, d) - expect) < 1e-9);
  CHECK(ssim(c, d) == doctest::Approx(ssim(d, c)).epsilon(1e-12));

  Image base(32, 32, 3);
  std::mt19937 rng(3);
  for (auto& p : base.pixels) p = static_cast<std::uint8_t>(64 + rng() % 128);
  double last_psnr = kPsnrIdentical, last_ssim = 1.0;
  for (int amp : {2, 6, 12, 24}) {
    Image noisy = base;
    std::mt19937 n(9);
    for (auto& p : noisy.pixels) p = static_cast<std::uint8_t>(p + static_cast<int>(n() % (2 * amp + 1)) - amp);
    const double ps = psnr(base, noisy), ss = ssim(base, noisy);
    CHECK(ps < last_psnr);
    CHECK(ss < last_ssim);
    last_psnr = ps;
    last_ssim = ss;
  }
  CHECK_THROWS_AS(psnr(a, c), ContractError);
  CHECK_THROWS_AS(ssim(Image(8, 8, 1), Image(8, 8, 1)), ContractError);
}

TEST_CASE("correlation and coding deltas") {
  std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8};
  CHECK(r_squared(x, y) == doctest::Approx(1.0).epsilon(1e-14));
  std::vector<double> z{1, 3, 2, 4};
  CHECK(r_squared(x, z) == doctest::Approx(0.64).epsilon(1e-12));
  CHECK_THROWS_AS(r_squared(x, std::vector<double>{1, 1, 1, 1}), ContractError);

  std::vector<CodedPair> pairs{{30, 31, 0.9, 0.95, 1.0, 1.5}, {35, 33, 0.8, 0.8, 2.0, 1.0}, {40, 40, 0.7, 0.6, 3.0, 3.0}};
  const auto r = delta_metrics(pairs);
  CHECK(r.abs_dpsnr == doctest::Approx(1.0));
  CHECK(r.abs_dssim == doctest::Approx(0.05));
  CHECK(r.abs_drate == doctest::Approx(0.5));
  CHECK(r.r2 == doctest::Approx(r_squared(std::vector<double>{31, 33, 40}, std::vector<double>{30, 35, 40})));
}

TEST_CASE("average precision") {
  SUBCASE("perfect detections give 100") {
    DetectionSet gt{{"i", "car", {0, 0, 10, 10}, {}}, {"i", "dog", {20, 20, 40, 30}, {}}};
    DetectionSet dets = gt;
    for (auto& d : dets) d.score = 0.9;
    CHECK(map_at_iou(dets, gt, 0.5) == doctest::Approx(100.0));
  }
  SUBCASE("iou 0.4 counts only below the threshold") {
    DetectionSet gt{{"i", "car", {0, 0, 10, 10}, {}}};
    DetectionSet dets{{"i", "car", Box{0, 0, 10, 4}, 0.8}};  // 40 / 100
    REQUIRE(iou(dets[0].box, gt[0].box) == doctest::Approx(0.4));
    CHECK(map_at_iou(dets, gt, 0.5) == 0.0);
    CHECK(map_at_iou(dets, gt, 0.3) == doctest::Approx(100.0));
  }
  SUBCASE("agrees with a brute-force precision envelope") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      const int n_gt = 1 + static_cast<int>(rng() % 8);
      DetectionSet gt, dets;
      for (int g = 0; g < n_gt; ++g) gt.push_back({"img", "c", Box::from_xywh(100.0 * g, 0, 50, 50), {}});
      std::vector<bool> taken(n_gt, false);
      std::vector<std::tuple<double, int, bool>> plan;  // score, target, is a hit
      const int n_det = static_cast<int>(rng() % 12);
      for (int k = 0; k < n_det; ++k) {
        const double score = (rng() % 100000) / 100000.0;
        const int target = static_cast<int>(rng() % n_gt);
        const bool hit = rng() % 3 != 0;
        plan.emplace_back(score, target, hit);
        Box b = hit ? gt[target].box : Box::from_xywh(100.0 * target + 40, 40, 50, 50);
        dets.push_back({"img", "c", b, score});
      }
      auto order = plan;
      std::stable_sort(order.begin(), order.end(),
                       [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
      std::vector<bool> tp;
      for (const auto& [score, target, hit] : order) {
        const bool ok = hit && !taken[target];
        if (ok) taken[target] = true;
        tp.push_back(ok);
      }
      CHECK(average_precision(dets, gt, "c", 0.5) == doctest::Approx(brute_force_ap(tp, n_gt)).epsilon(1e-12));
    }
  }
  SUBCASE("stricter thresholds never raise mAP") {
    std::mt19937_64 rng(4);
    DetectionSet gt, dets;
    std::normal_distribution<double> jitter(0.0, 3.0);
    for (int g = 0; g < 30; ++g) {
      const Box b = Box::from_xywh(60.0 * g, 0, 40, 40);
      gt.push_back({"img", g % 2 ? "a" : "b", b, {}});
      dets.push_back({"img", g % 2 ? "a" : "b", Box::from_xywh(b.x0 + jitter(rng), jitter(rng), 40, 40),
                      (rng() % 1000) / 1000.0});
    }
    double last = 101;
    for (double t = 0.3; t < 0.96; t += 0.05) {
      const double m = map_at_iou(dets, gt, t);
      CHECK(m <= last + 1e-12);
      last = m;
    }
  }
  CHECK_THROWS_AS(map_at_iou({}, {}, 0.5), ContractError);
}

TEST_CASE("detection JSON") {
  testutil::TempDir dir("dets");
  DetectionSet d{{"i1", "car", Box::from_xywh(1, 2, 3, 4), 0.5}};
  save_detections(d, dir / "d.json");
  const auto back = load_detections(dir / "d.json", true);
  REQUIRE(back.size() == 1);
  CHECK(back[0].box == d[0].box);
  CHECK(*back[0].score == 0.5);
  std::ofstream(dir / "bad.json") << R"([{"image_id":"i","category":"c","bbox":[0,0,1,1]}])";
  CHECK_THROWS_AS(load_detections(dir / "bad.json", true), FormatError);
  CHECK(load_detections(dir / "bad.json", false).size() == 1);
}

TEST_CASE("Bjontegaard deltas") {
  const auto anchor = curve({0.1, 0.2, 0.4, 0.8, 1.6}, {30, 34, 37, 39, 40});
  SUBCASE("identical curves") {
    CHECK(std::abs(bd_rate(anchor, anchor).value) < 1e-9);
    CHECK(std::abs(bd_metric(anchor, anchor).value) < 1e-9);
  }
  SUBCASE("ten percent more rate") {
    auto test = anchor;
    for (auto& p : test.points) p.rate *= 1.10;
    CHECK(bd_rate(anchor, test).value == doctest::Approx(10.0).epsilon(1e-3));
    CHECK(std::abs(bd_rate(anchor, test).value - 10.0) < 0.1);
    // swapping the curves inverts the rate ratio
    CHECK(bd_rate(test, anchor).value == doctest::Approx(100.0 * (1.0 / 1.10 - 1.0)).epsilon(1e-6));
  }
  SUBCASE("metric shifted up by two") {
    auto test = anchor;
    for (auto& p : test.points) p.metric += 2.0;
    CHECK(std::abs(bd_metric(anchor, test).value - 2.0) < 0.01);
    CHECK(bd_rate(anchor, test).value < 0.0);
  }
  SUBCASE("matches interpolation and numeric integration on four points") {
    const auto a = curve({0.1, 0.25, 0.5, 1.1}, {20, 27, 31, 33});
    const auto t = curve({0.12, 0.3, 0.45, 1.0}, {22, 28, 30.5, 34});
    std::vector<double> la, ma, lt, mt;
    for (const auto& p : a.points) la.push_back(std::log10(p.rate)), ma.push_back(p.metric);
    for (const auto& p : t.points) lt.push_back(std::log10(p.rate)), mt.push_back(p.metric);
    const double lo = std::max(la.front(), lt.front()), hi = std::min(la.back(), lt.back());
    const double expect_metric =
        simpson([&](double x) { return lagrange4(lt, mt, x) - lagrange4(la, ma, x); }, lo, hi) / (hi - lo);
    CHECK(bd_metric(a, t).value == doctest::Approx(expect_metric).epsilon(1e-9));

    const double mlo = std::max(ma.front(), mt.front()), mhi = std::min(ma.back(), mt.back());
    const double avg = simpson([&](double m) { return lagrange4(mt, lt, m) - lagrange4(ma, la, m); }, mlo, mhi) /
                       (mhi - mlo);
    CHECK(bd_rate(a, t).value == doctest::Approx(100.0 * (std::pow(10.0, avg) - 1.0)).epsilon(1e-9));
  }
  SUBCASE("disjoint metric ranges") {
    const auto far = curve({0.1, 0.2, 0.4, 0.8}, {60, 61, 62, 63});
    CHECK_THROWS_AS(bd_rate(anchor, far), ContractError);
  }
  SUBCASE("non-monotone curves warn") {
    const auto wobbly = curve({0.1, 0.2, 0.4, 0.8, 1.6}, {30, 35, 34, 39, 40});
    CHECK_FALSE(bd_rate(anchor, wobbly).warnings.empty());
  }
  SUBCASE("curve validation and CSV") {
    CHECK_THROWS_AS(curve({0.1, 0.2, 0.3}, {1, 2, 3}).validate(), ContractError);
    CHECK_THROWS_AS(curve({0.1, 0.2, 0.2, 0.3}, {1, 2, 3, 4}).validate(), ContractError);
    CHECK_THROWS_AS(curve({0.0, 0.2, 0.25, 0.3}, {1, 2, 3, 4}).validate(), ContractError);
    testutil::TempDir dir("curve");
    save_curve_csv(anchor, dir / "c.csv");
    const auto back = load_curve_csv(dir / "c.csv");
    REQUIRE(back.points.size() == anchor.points.size());
    for (std::size_t i = 0; i < back.points.size(); ++i) {
      CHECK(back.points[i].rate == anchor.points[i].rate);
      CHECK(back.points[i].metric == anchor.points[i].metric);
    }
    std::ofstream(dir / "shuffled.csv") << "metric,extra,rate_bpp\n40,x,1.6\n30,y,0.1\n37,z,0.4\n34,w,0.2\n";
    const auto s = load_curve_csv(dir / "shuffled.csv");
    CHECK(s.points.front().rate == 0.1);
    CHECK(s.points.back().metric == 40);
    std::ofstream(dir / "nohdr.csv") << "a,b\n1,2\n";
    CHECK_THROWS_AS(load_curve_csv(dir / "nohdr.csv"), FormatError);
  }
}
