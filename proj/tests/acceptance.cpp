// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "dtjrd/bjontegaard.hpp"
#include "dtjrd/dataset.hpp"
#include "dtjrd/detection.hpp"
#include "dtjrd/errors.hpp"
#include "dtjrd/labels.hpp"
#include "dtjrd/metrics.hpp"
#include "dtjrd/model.hpp"
#include "dtjrd/ops.hpp"
#include "dtjrd/trainer.hpp"
#include "dtjrd/vcm.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dtjrd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kLabelTol = 1e-12;
constexpr double kLossTol = 1e-12;
constexpr double kLossGradTol = 1e-10;
constexpr double kPosExactTol = 1e-6;
constexpr double kPosOracleTol = 1e-5;
constexpr double kPsnrTol = 1e-9;
constexpr double kSsimTol = 1e-12;
constexpr double kBdRateTol = 0.1;
constexpr int kLayouts = 1000;
constexpr int kProxyImages = 200;
constexpr double kProxyFraction = 0.95;
constexpr double kProxySeconds = 300.0;
constexpr std::size_t kSynthN = 300;
constexpr std::uint64_t kSynthSeed = 7;
constexpr std::size_t kEpochs = 50;
constexpr std::size_t kBatch = 8;
constexpr double kMaxTrainEA = 3.0;
constexpr int kMinDecreasing = 8;
constexpr double kTrainSeconds = 900.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int prec = 3) {
  std::ostringstream o;
  o << std::setprecision(prec) << v;
  return o.str();
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto start = Clock::now();
  Model<double> m({32, 8, 16, 2, 2, 32, 64}, 13);
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& p : m.parameters()) {
    const bool is_scale = p.name.ends_with(".scale");
    const bool is_matrix = p.tensor.shape().size() == 2 && p.name != "pos_embed";
    const double sd = is_matrix ? 1.0 / std::sqrt(static_cast<double>(p.tensor.dim(0))) : 0.1;
    for (double& v : p.tensor.mutable_data()) v = (is_scale ? 1.0 : 0.0) + sd * n(rng);
  }
  auto images = testutil::random_tensor({2, 3, 32, 32}, 15, 0, 1);
  const std::vector<LabelDistribution> labels{gaussian_soft_labels(30, 3.0, 64), gaussian_soft_labels(12, 3.0, 64)};
  std::vector<Tensor<double>> params;
  for (auto& p : m.parameters()) params.push_back(p.tensor);
  const double err = testutil::max_grad_error(params, [&] { return soft_cross_entropy(m.forward(images), labels); });
  const double secs = seconds_since(start);
  return {err < kGradRelTol && secs < kGradSeconds,
          "max rel err " + fmt(err) + " over " + std::to_string(m.parameter_count()) + " params, " + fmt(secs) + " s"};
}

Outcome gdsl_suite() {
  double worst_sum = 0, worst_ratio = 0;
  bool ok = true;
  for (int mu = 0; mu < 64; ++mu) {
    for (int s = 2; s <= 7; ++s) {
      const auto d = gaussian_soft_labels(mu, s, 64);
      double total = 0;
      for (double p : d.probs) total += p;
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
      ok &= std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin() == mu;
      for (int k = 1; mu - k >= 0 && mu + k <= 63; ++k) ok &= d.probs[mu + k] == d.probs[mu - k];
      if (mu + 3 <= 63) {
        worst_ratio = std::max(worst_ratio, std::abs(d.probs[mu + 3] / d.probs[mu] - std::exp(-9.0 / (2.0 * s * s))));
      }
    }
  }
  ok &= worst_sum < kLabelTol && worst_ratio < kLabelTol;
  return {ok, "384 (mu, sigma) pairs, sum err " + fmt(worst_sum) + ", ratio err " + fmt(worst_ratio)};
}

Outcome loss_identities() {
  auto logits = testutil::random_tensor({3, 64}, 1, -4, 4);
  const std::vector<LabelDistribution> oh{one_hot(3, 64), one_hot(40, 64), one_hot(63, 64)};
  double expect = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const double* row = logits.data().data() + b * 64;
    double z = 0;
    for (int x = 0; x < 64; ++x) z += std::exp(row[x]);
    expect -= row[oh[b].mu] - std::log(z);
  }
  const double e1 = std::abs(soft_cross_entropy(logits, oh).item() - expect / 3.0);
  const double e2 = std::abs(
      soft_cross_entropy(Tensor<double>({1, 64}, 0.0), std::vector<LabelDistribution>{one_hot(9, 64)}).item() -
      std::log(64.0));
  const std::vector<LabelDistribution> g{gaussian_soft_labels(3, 3, 64), gaussian_soft_labels(9, 2, 64),
                                         smooth_labels(50, 64, 0.9)};
  auto x = logits.clone();
  x.set_requires_grad(true);
  soft_cross_entropy(x, g).backward();
  double e3 = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const double* row = logits.data().data() + b * 64;
    double z = 0;
    for (int k = 0; k < 64; ++k) z += std::exp(row[k]);
    for (std::size_t k = 0; k < 64; ++k) {
      e3 = std::max(e3, std::abs(x.grad()[b * 64 + k] - (std::exp(row[k]) / z - g[b].probs[k]) / 3.0));
    }
  }
  return {e1 < kLossTol && e2 < kLossTol && e3 < kLossGradTol,
          "one-hot " + fmt(e1) + ", ln64 " + fmt(e2) + ", grad " + fmt(e3)};
}

Outcome pos_embed_interpolation() {
  const std::size_t d = 3;
  auto pe = testutil::random_tensor({1 + 49, d}, 20);
  const auto same = interpolate_pos_embed(pe, 7);
  double e_id = 0;
  for (std::size_t i = 0; i < pe.numel(); ++i) e_id = std::max(e_id, std::abs(same.data()[i] - pe.data()[i]));

  const auto flat = interpolate_pos_embed(Tensor<double>({1 + 49, d}, 0.25), 12);
  double e_const = 0;
  for (double v : flat.data()) e_const = std::max(e_const, std::abs(v - 0.25));

  const auto big = interpolate_pos_embed(pe, 12);
  bool shape_ok = big.shape() == Shape{1 + 144, d};
  double e_oracle = 0;
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> grid(49);
    for (std::size_t i = 0; i < 49; ++i) grid[i] = pe.data()[(1 + i) * d + c];
    const auto ref = testutil::hermite_resize(grid, 7, 7, 12, 12);
    for (std::size_t i = 0; i < 144; ++i) e_oracle = std::max(e_oracle, std::abs(big.data()[(1 + i) * d + c] - ref[i]));
    e_oracle = std::max(e_oracle, std::abs(big.data()[c] - pe.data()[c]));  // class row copied
  }
  return {shape_ok && e_id < kPosExactTol && e_const < kPosExactTol && e_oracle < kPosOracleTol,
          "identity " + fmt(e_id) + ", constant " + fmt(e_const) + ", 49->144 vs oracle " + fmt(e_oracle)};
}

Outcome freeze_invariants() {
  const ModelConfig cfg{32, 8, 16, 2, 2, 32, 64};
  Model<float> m(cfg, 2);
  for (auto& v : m.param("head.w").tensor.mutable_data()) v = 0.05f;
  const auto mask = freeze_mask(m, Strategy::kDAFT);
  for (auto& p : m.parameters()) p.trainable = mask.at(p.name);
  std::map<std::string, std::vector<float>> before;
  for (const auto& p : m.parameters()) before[p.name].assign(p.tensor.data().begin(), p.tensor.data().end());

  auto v = testutil::random_values(4 * 3 * 32 * 32, 3);
  Tensor<float> batch({4, 3, 32, 32}, std::vector<float>(v.begin(), v.end()));
  std::vector<LabelDistribution> labels;
  for (int j : {20, 31, 44, 50}) labels.push_back(gaussian_soft_labels(j, 3.0, 64));
  SgdMomentum<float> opt(0.9, 5e-5);
  bool frozen_grad = false;
  for (int step = 0; step < 10; ++step) {
    m.zero_grad();
    soft_cross_entropy(m.forward(batch), labels).backward();
    for (const auto& p : m.parameters())
      if (!p.trainable && p.tensor.has_grad())
        for (float g : p.tensor.grad()) frozen_grad |= g != 0.0f;
    opt.step(m.parameters(), 0.01);
  }
  std::size_t frozen = 0, unchanged = 0;
  for (const auto& p : m.parameters()) {
    if (mask.at(p.name)) continue;
    ++frozen;
    unchanged += std::memcmp(p.tensor.data().data(), before[p.name].data(), before[p.name].size() * sizeof(float)) == 0;
  }
  auto trainable = [&](Strategy s) {
    std::set<std::string> out;
    for (const auto& [name, on] : freeze_mask(m, s))
      if (on) out.insert(name);
    return out;
  };
  const auto lp = trainable(Strategy::kLP), daft = trainable(Strategy::kDAFT), ff = trainable(Strategy::kFF);
  const bool nested = std::includes(daft.begin(), daft.end(), lp.begin(), lp.end()) &&
                      std::includes(ff.begin(), ff.end(), daft.begin(), daft.end()) && lp.size() < daft.size() &&
                      daft.size() < ff.size();
  return {frozen_grad && frozen > 0 && unchanged == frozen && nested,
          std::to_string(unchanged) + "/" + std::to_string(frozen) + " frozen tensors byte-identical, nesting " +
              std::to_string(lp.size()) + " < " + std::to_string(daft.size()) + " < " + std::to_string(ff.size())};
}

double brute_force_ap(const std::vector<bool>& tp_order, std::size_t n_gt) {
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    double best = 0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < tp_order.size(); ++k) {
      tp += tp_order[k];
      if (static_cast<double>(tp) / n_gt >= r / 100.0 - 1e-12) best = std::max(best, static_cast<double>(tp) / (k + 1));
    }
    sum += best;
  }
  return sum / 101;
}

Outcome metric_oracles() {
  std::vector<std::string> fails;
  const std::vector<std::string> img{"a", "a"};
  if (mae_EA(std::vector<int>{30, 32}, std::vector<int>{28, 28}, img) != 3.0) fails.push_back("E_A");
  if (mae_EA(std::vector<int>{40, 45}, std::vector<int>{37, 40}, img) != 4.0) fails.push_back("E_A");
  if (mae_range(std::vector<int>{28, 34}, std::vector<int>{30, 30}) != 3.0) fails.push_back("E_range");

  // toy detections: 3 objects, 5 detections in score order tp, fp, tp, fp, tp
  DetectionSet gt{{"i", "c", {0, 0, 10, 10}, {}}, {"i", "c", {20, 0, 30, 10}, {}}, {"i", "c", {40, 0, 50, 10}, {}}};
  DetectionSet dets{{"i", "c", {0, 0, 10, 10}, 0.9},
                    {"i", "c", {70, 0, 80, 10}, 0.8},
                    {"i", "c", {20, 1, 30, 10}, 0.7},
                    {"i", "c", {0, 0, 10, 10}, 0.6},
                    {"i", "c", {40, 0, 50, 11}, 0.5}};
  const double ap = map_at_iou(dets, gt, 0.5);
  const double ap_ref = 100.0 * brute_force_ap({true, false, true, false, true}, 3);
  if (std::abs(ap - ap_ref) > 1e-9) fails.push_back("mAP " + fmt(ap, 8) + " vs " + fmt(ap_ref, 8));

  Image x(24, 24, 3);
  std::mt19937 rng(1);
  for (auto& p : x.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  if (std::abs(ssim(x, x) - 1.0) > kSsimTol) fails.push_back("ssim");
  if (std::abs(psnr(Image(16, 16, 3, 10), Image(16, 16, 3, 11)) - 20.0 * std::log10(255.0)) > kPsnrTol) {
    fails.push_back("psnr");
  }
  RateAccuracyCurve a, b;
  for (auto [r, m] : std::vector<std::pair<double, double>>{{0.1, 30}, {0.2, 34}, {0.4, 37}, {0.8, 39}, {1.6, 40}}) {
    a.points.push_back({r, m});
    b.points.push_back({r * 1.10, m});
  }
  const double bd = bd_rate(a, b).value;
  if (std::abs(bd - 10.0) > kBdRateTol) fails.push_back("bd-rate " + fmt(bd));
  std::string detail = "mAP " + fmt(ap, 6) + " (oracle " + fmt(ap_ref, 6) + "), BD-rate " + fmt(bd, 6) + "%";
  for (const auto& f : fails) detail += "; bad " + f;
  return {fails.empty(), detail};
}

Outcome qpmap_suite() {
  std::mt19937_64 rng(2024);
  std::size_t cells = 0, violations = 0;
  for (int t = 0; t < kLayouts; ++t) {
    const int w = 16 + static_cast<int>(rng() % 400), h = 16 + static_cast<int>(rng() % 400);
    std::uniform_real_distribution<double> ux(0, w), uy(0, h);
    std::vector<Box> boxes;
    std::vector<int> jrd;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      double x0 = ux(rng), x1 = ux(rng), y0 = uy(rng), y1 = uy(rng);
      if (x0 > x1) std::swap(x0, x1);
      if (y0 > y1) std::swap(y0, y1);
      if (x1 - x0 < 0.5 || y1 - y0 < 0.5) continue;
      if (rng() % 4 == 0) x0 = std::floor(x0 / 64) * 64;  // edges on cell borders
      boxes.push_back({x0, y0, x1, y1});
      jrd.push_back(static_cast<int>(rng() % 64));
    }
    const int delta = -static_cast<int>(rng() % 5);
    const int qp_b = static_cast<int>(rng() % 64);
    const auto grid = classify_ctus(w, h, boxes);
    const auto a = assign_qps(grid, jrd, delta, qp_b);
    int max_obj = -1, min_bg = 64;
    for (int r = 0; r < grid.rows; ++r) {
      for (int c = 0; c < grid.cols; ++c, ++cells) {
        // cell rectangle, clipped to the image
        const double cx0 = c * 64.0, cy0 = r * 64.0, cx1 = std::min(cx0 + 64, double(w)), cy1 = std::min(cy0 + 64, double(h));
        int lowest = 64;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          const double ow = std::min(cx1, boxes[i].x1) - std::max(cx0, boxes[i].x0);
          const double oh = std::min(cy1, boxes[i].y1) - std::max(cy0, boxes[i].y0);
          if (ow > 0 && oh > 0) lowest = std::min(lowest, jrd[i]);
        }
        const int got = a.map.at(r, c);
        if (lowest < 64) {
          violations += grid.at(r, c) != CtuKind::kObject || got != std::clamp(lowest + delta, 0, 63);
          max_obj = std::max(max_obj, got);
        } else {
          violations += grid.at(r, c) != CtuKind::kBackground;
          min_bg = std::min(min_bg, got);
        }
      }
    }
    violations += max_obj > min_bg;
  }
  return {violations == 0, std::to_string(kLayouts) + " layouts, " + std::to_string(cells) + " cells, " +
                               std::to_string(violations) + " violations"};
}

Image textured_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int w = 64 + static_cast<int>(rng() % 97), h = 64 + static_cast<int>(rng() % 97);
  std::uniform_real_distribution<double> u(0, 1);
  const double fx = 0.05 + 0.6 * u(rng), fy = 0.05 + 0.6 * u(rng), amp = 10 + 80 * u(rng), noise = 40 * u(rng);
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = 128 + amp * std::sin(fx * x + fy * y + c) + 0.3 * (x - y) + noise * (u(rng) - 0.5);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return img;
}

double image_mse(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::pow(double(a.pixels[i]) - b.pixels[i], 2);
  return s / a.pixels.size();
}

Outcome proxy_statistics() {
  const auto start = Clock::now();
  ProxyCodec codec;
  int mse_ok = 0, bits_ok = 0;
  for (int i = 0; i < kProxyImages; ++i) {
    const auto img = textured_image(500 + i);
    const int qp = 10 + i % 48;
    const auto at20 = codec.encode(img, QpMap::uniform(img.width, img.height, 20));
    const auto at40 = codec.encode(img, QpMap::uniform(img.width, img.height, 40));
    mse_ok += image_mse(img, at40.reconstruction) >= image_mse(img, at20.reconstruction);
    const auto lo = codec.encode(img, QpMap::uniform(img.width, img.height, qp));
    const auto hi = codec.encode(img, QpMap::uniform(img.width, img.height, qp + 6));
    bits_ok += hi.bits <= lo.bits;
  }
  const double secs = seconds_since(start);
  const int need = static_cast<int>(std::ceil(kProxyFraction * kProxyImages));
  return {mse_ok >= need && bits_ok >= need && secs < kProxySeconds,
          "MSE(40)>=MSE(20) on " + std::to_string(mse_ok) + "/" + std::to_string(kProxyImages) + ", bits(QP+6)<=bits(QP) on " +
              std::to_string(bits_ok) + "/" + std::to_string(kProxyImages) + ", " + fmt(secs) + " s"};
}

// Mean loss of a model over examples, no augmentation.
double mean_loss(const Model<float>& m, const std::vector<Example>& ex, const LabelSpec& spec) {
  NoGradGuard guard;
  double total = 0;
  for (std::size_t i = 0; i < ex.size(); i += 32) {
    const std::size_t n = std::min<std::size_t>(32, ex.size() - i);
    const std::size_t px = ex[i].image.numel();
    std::vector<float> buf;
    buf.reserve(n * px);
    std::vector<LabelDistribution> labels;
    for (std::size_t k = i; k < i + n; ++k) {
      buf.insert(buf.end(), ex[k].image.data().begin(), ex[k].image.data().end());
      labels.push_back(make_labels(spec, ex[k].jrd, 64));
    }
    const Shape shape{n, ex[i].image.dim(0), ex[i].image.dim(1), ex[i].image.dim(2)};
    total += soft_cross_entropy(m.forward(Tensor<float>(shape, buf)), labels).item() * static_cast<double>(n);
  }
  return total / static_cast<double>(ex.size());
}

struct TrainRun {
  double ea = 0;
  int decreasing = 0;
  double secs = 0;
};

TrainRun train_toy(const std::vector<Example>& data, LabelKind kind) {
  const auto start = Clock::now();
  TrainConfig cfg;
  cfg.strategy = Strategy::kDAFT;
  cfg.labels.kind = kind;
  cfg.labels.sigma = 3.0;
  cfg.epochs = kEpochs;
  cfg.batch_size = kBatch;
  cfg.lr0 = 0.01;
  cfg.seed = 1;
  Model<float> init(ModelConfig::toy(), 1);
  std::vector<double> losses{mean_loss(init, data, cfg.labels)};
  auto result = fit(std::move(init), data, {}, cfg);
  for (const auto& e : result.log) losses.push_back(e.train_loss);
  TrainRun r;
  for (std::size_t e = 1; e <= 10 && e < losses.size(); ++e) r.decreasing += losses[e] < losses[e - 1];
  const auto pred = predict_examples(result.model, data);
  std::vector<int> gt;
  std::vector<std::string> groups;
  for (const auto& e : data) {
    gt.push_back(e.jrd);
    groups.push_back(e.group);
  }
  r.ea = mae_EA(pred, gt, groups);
  r.secs = seconds_since(start);
  return r;
}

Outcome end_to_end(std::string& report) {
  testutil::TempDir dir("accept-e2e");
  const auto synth = synth_dataset(kSynthN, kSynthSeed, dir.path());
  std::vector<Example> data;
  for (const auto& r : synth.records) {
    data.push_back({preprocess(r, dir.path(), ModelConfig::toy().image_size), r.jrd, r.object_id, r.source_image_id});
  }
  const auto gdsl = train_toy(data, LabelKind::kGaussian);
  const auto onehot = train_toy(data, LabelKind::kOneHot);
  report = "one-hot run: train E_A " + fmt(onehot.ea) + " vs GDSL " + fmt(gdsl.ea) + " (reported, not asserted)";
  return {gdsl.ea <= kMaxTrainEA && gdsl.decreasing >= kMinDecreasing && gdsl.secs < kTrainSeconds,
          "train E_A " + fmt(gdsl.ea) + ", loss decreased on " + std::to_string(gdsl.decreasing) +
              "/10 early epochs, " + fmt(gdsl.secs) + " s"};
}

int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && DTJRD_THREADS=0 '" DTJRD_CLI_PATH "' " + args +
                          " > /dev/null 2> stderr.txt";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel == "stderr.txt") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[rel] = ss.str();
  }
  return out;
}

Outcome determinism() {
  testutil::TempDir a("accept-det-a"), b("accept-det-b");
  const std::vector<std::string> steps{
      "synth-data --n 40 --seed 11 --out-dir data",
      "make-splits --manifest data/manifest.jsonl --seed 4",
      "train --manifest data/manifest.jsonl --splits data/splits.csv --epochs 3 --batch-size 8 --seed 2 "
      "--checkpoint-out model.ckpt",
      "predict --checkpoint model.ckpt --manifest data/manifest.jsonl --out pred.csv",
      "curve --manifest data/manifest.jsonl --checkpoint model.ckpt --base-qps 27,31 --delta-qps -4,-2,0 "
      "--save-recon --out-dir sweep"};
  for (const auto* d : {&a, &b}) {
    for (const auto& s : steps) {
      if (run_cli(s, d->path()) != 0) return {false, "step failed: " + s};
    }
  }
  const auto ta = tree_bytes(a.path()), tb = tree_bytes(b.path());
  std::size_t ckpt = 0, qp = 0, csv = 0, differ = 0;
  for (const auto& [name, bytes] : ta) {
    ckpt += name.ends_with(".ckpt");
    qp += name.ends_with(".qpmap.txt");
    csv += name.ends_with(".csv");
    auto it = tb.find(name);
    differ += it == tb.end() || it->second != bytes;
  }
  differ += ta.size() != tb.size();
  return {differ == 0 && ckpt > 0 && qp > 0 && csv > 0,
          std::to_string(ta.size()) + " files compared (" + std::to_string(ckpt) + " checkpoint, " + std::to_string(qp) +
              " QP maps, " + std::to_string(csv) + " CSV), " + std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only(argv + 1, argv + argc);
  std::string e2e_report;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-oracle", gradient_oracle},
      {"gdsl-suite", gdsl_suite},
      {"loss-identities", loss_identities},
      {"pos-embed-interpolation", pos_embed_interpolation},
      {"freeze-invariants", freeze_invariants},
      {"metric-oracles", metric_oracles},
      {"qpmap-suite", qpmap_suite},
      {"proxy-statistics", proxy_statistics},
      {"end-to-end-trainability", [&] { return end_to_end(e2e_report); }},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  if (!e2e_report.empty()) std::cout << "note " << e2e_report << std::endl;
  return failed ? 1 : 0;
}
