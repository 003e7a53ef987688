#include "dtjrd/labels.hpp"

#include <cmath>

#include "dtjrd/ops.hpp"

namespace dtjrd {

namespace {
void check_mu(int mu, int n) {
  if (n < 1) throw ContractError("label: class count must be >= 1");
  if (mu < 0 || mu >= n) {
    throw ContractError("label: mu " + std::to_string(mu) + " outside [0, " + std::to_string(n - 1) + "]");
  }
}
}  // namespace

const char* label_kind_name(LabelKind kind) {
  switch (kind) {
    case LabelKind::kOneHot: return "onehot";
    case LabelKind::kSmooth: return "smooth";
    case LabelKind::kGaussian: return "gdsl";
  }
  return "?";
}

LabelKind parse_label_kind(const std::string& name) {
  if (name == "onehot" || name == "one_hot" || name == "one-hot") return LabelKind::kOneHot;
  if (name == "smooth") return LabelKind::kSmooth;
  if (name == "gdsl" || name == "gaussian") return LabelKind::kGaussian;
  throw ConfigError("unknown label kind '" + name + "'");
}

LabelDistribution one_hot(int mu, int n) {
  check_mu(mu, n);
  LabelDistribution l{std::vector<double>(static_cast<std::size_t>(n), 0.0), LabelKind::kOneHot, 0.0, mu};
  l.probs[static_cast<std::size_t>(mu)] = 1.0;
  return l;
}

LabelDistribution smooth_labels(int mu, int n, double eps) {
  check_mu(mu, n);
  if (!(eps > 0.0 && eps < 1.0)) throw ContractError("smooth_labels: eps must lie in (0, 1)");
  if (n < 2) throw ContractError("smooth_labels: needs at least 2 classes");
  LabelDistribution l{std::vector<double>(static_cast<std::size_t>(n), (1.0 - eps) / (n - 1)),
                      LabelKind::kSmooth, eps, mu};
  l.probs[static_cast<std::size_t>(mu)] = eps;
  return l;
}

LabelDistribution gaussian_soft_labels(int mu, double sigma, int n) {
  check_mu(mu, n);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractError("gaussian_soft_labels: sigma must be > 0");
  LabelDistribution l{std::vector<double>(static_cast<std::size_t>(n)), LabelKind::kGaussian, sigma, mu};
  // The 1/(sqrt(2 pi) sigma) factor cancels in the normalization.
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (int x = 0; x < n; ++x) {
    const int d = x - mu;
    const double v = std::exp(-static_cast<double>(d * d) * inv);
    l.probs[static_cast<std::size_t>(x)] = v;
    total += v;
  }
  for (double& p : l.probs) p /= total;
  return l;
}

LabelDistribution make_labels(const LabelSpec& spec, int mu, int n) {
  switch (spec.kind) {
    case LabelKind::kOneHot: return one_hot(mu, n);
    case LabelKind::kSmooth: return smooth_labels(mu, n, spec.eps);
    case LabelKind::kGaussian: return gaussian_soft_labels(mu, spec.sigma, n);
  }
  throw ConfigError("unknown label kind");
}

template <typename T>
Tensor<T> soft_cross_entropy(const Tensor<T>& logits, std::span<const LabelDistribution> labels) {
  if (logits.rank() != 2) throw DimensionError("soft_cross_entropy: expected logits[B,N]");
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  if (labels.size() != b) {
    throw ContractError("soft_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                        std::to_string(b));
  }
  std::vector<T> target;
  target.reserve(b * n);
  for (const auto& l : labels) {
    if (l.probs.size() != n) {
      throw ContractError("soft_cross_entropy: label length " + std::to_string(l.probs.size()) +
                          " does not match " + std::to_string(n) + " logits");
    }
    for (double p : l.probs) target.push_back(static_cast<T>(p));
  }
  Tensor<T> t(Shape{b, n}, std::move(target));
  auto logp = ops::log_softmax(logits);
  return ops::scale(ops::sum(ops::mul(t, logp)), static_cast<T>(-1.0 / static_cast<double>(b)));
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

template Tensor<float> soft_cross_entropy(const Tensor<float>&, std::span<const LabelDistribution>);
template Tensor<double> soft_cross_entropy(const Tensor<double>&, std::span<const LabelDistribution>);

}  // namespace dtjrd
