#pragma once

#include <span>
#include <string>
#include <vector>

#include "dtjrd/tensor.hpp"

namespace dtjrd {

enum class LabelKind { kOneHot, kSmooth, kGaussian };

const char* label_kind_name(LabelKind kind);
LabelKind parse_label_kind(const std::string& name);

/// Target distribution over the N QP classes for one object.
struct LabelDistribution {
  std::vector<double> probs;
  LabelKind kind = LabelKind::kOneHot;
  double param = 0.0;  // eps for smooth, sigma for gaussian
  int mu = 0;
};

LabelDistribution one_hot(int mu, int n);

/// probs[mu] = eps, every other class (1 - eps) / (n - 1).
LabelDistribution smooth_labels(int mu, int n, double eps);

/// Discrete Gaussian around mu, normalized over the classes 0..n-1.
LabelDistribution gaussian_soft_labels(int mu, double sigma, int n);

struct LabelSpec {
  LabelKind kind = LabelKind::kGaussian;
  double sigma = 3.0;
  double eps = 0.9;
};

LabelDistribution make_labels(const LabelSpec& spec, int mu, int n);

/// Mean over the batch of -sum_x L(x) log softmax(logits)(x).
template <typename T>
Tensor<T> soft_cross_entropy(const Tensor<T>& logits, std::span<const LabelDistribution> labels);

double entropy(std::span<const double> probs);

}  // namespace dtjrd
