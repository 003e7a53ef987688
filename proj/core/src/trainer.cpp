#include "dtjrd/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>

#include "dtjrd/metrics.hpp"

namespace dtjrd {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kLP: return "lp";
    case Strategy::kFF: return "ff";
    case Strategy::kDAFT: return "daft";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  std::string n;
  for (char c : name) n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (n == "lp") return Strategy::kLP;
  if (n == "ff") return Strategy::kFF;
  if (n == "daft") return Strategy::kDAFT;
  throw ConfigError("unknown strategy '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("lr0 must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(flip_probability >= 0 && flip_probability <= 1)) throw ConfigError("flip probability must lie in [0, 1]");
}

namespace {

enum class Group { kEmbedding, kBlock, kFinalNorm, kHead };

Group classify_param(const std::string& name) {
  static const std::regex block(
      R"(block\d+\.(ln1\.(scale|shift)|ln2\.(scale|shift)|attn\.(qkv|proj)\.(w|b)|mlp\.(w1|b1|w2|b2)))");
  if (name == "patch_embed.w" || name == "patch_embed.b" || name == "class_token" || name == "pos_embed") {
    return Group::kEmbedding;
  }
  if (name == "final_ln.scale" || name == "final_ln.shift") return Group::kFinalNorm;
  if (name == "head.w" || name == "head.b") return Group::kHead;
  if (std::regex_match(name, block)) return Group::kBlock;
  throw ConfigError("parameter '" + name + "' does not belong to any known module");
}

}  // namespace

template <typename T>
FreezeMask freeze_mask(const Model<T>& model, Strategy strategy) {
  FreezeMask mask;
  for (const auto& p : model.parameters()) {
    const Group g = classify_param(p.name);
    bool trainable = true;
    switch (strategy) {
      case Strategy::kLP: trainable = g == Group::kHead; break;
      case Strategy::kFF: trainable = true; break;
      case Strategy::kDAFT: trainable = g == Group::kBlock || g == Group::kHead; break;
    }
    mask[p.name] = trainable;
  }
  return mask;
}

template <typename T>
void apply_freeze_mask(Model<T>& model, const FreezeMask& mask) {
  for (auto& p : model.parameters()) {
    auto it = mask.find(p.name);
    if (it == mask.end()) throw ConfigError("freeze mask has no entry for '" + p.name + "'");
    p.trainable = it->second;
    p.tensor.set_requires_grad(it->second);
  }
  for (const auto& [name, flag] : mask) {
    if (!model.has_param(name)) throw ConfigError("freeze mask names unknown parameter '" + name + "'");
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps < 1) throw ContractError("cosine_lr: total_steps must be >= 1");
  if (step > total_steps) throw ContractError("cosine_lr: step beyond total_steps");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
SgdMomentum<T>::SgdMomentum(double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {}

template <typename T>
void SgdMomentum<T>::step(std::vector<Parameter<T>>& params, double lr) {
  for (const auto& p : params) {
    if (p.trainable && !p.tensor.has_grad()) {
      throw ContractError("sgd step: trainable parameter '" + p.name + "' has no gradient");
    }
  }
  const T m = static_cast<T>(momentum_);
  const T wd = static_cast<T>(weight_decay_);
  const T rate = static_cast<T>(lr);
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto values = p.tensor.mutable_data();
    auto grad = p.tensor.grad();
    auto& v = velocity_[p.name];
    if (v.size() != values.size()) v.assign(values.size(), T(0));
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = m * v[i] + grad[i] + wd * values[i];
      values[i] -= rate * v[i];
      if (!std::isfinite(values[i])) throw NumericError("sgd step made '" + p.name + "' non-finite");
    }
  }
}

namespace {

// Stacks examples into [B, 3, S, S], mirroring those flagged in `flip`.
template <typename T>
Tensor<T> make_batch(const std::vector<Example>& data, const std::vector<std::size_t>& ids,
                     const std::vector<bool>& flip) {
  const Shape& s = data[ids[0]].image.shape();
  const std::size_t h = s[1], w = s[2];
  std::vector<T> buf;
  buf.reserve(ids.size() * 3 * h * w);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& img = data[ids[k]].image;
    if (img.shape() != s) throw ContractError("batch: examples differ in shape");
    auto px = img.data();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const float* row = px.data() + (c * h + y) * w;
        for (std::size_t x = 0; x < w; ++x) buf.push_back(static_cast<T>(flip[k] ? row[w - 1 - x] : row[x]));
      }
    }
  }
  return Tensor<T>(Shape{ids.size(), 3, h, w}, std::move(buf));
}

template <typename T>
double validation_ea(const Model<T>& model, const std::vector<Example>& val) {
  if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto pred = predict_examples(model, val);
  std::vector<int> gt;
  std::vector<std::string> groups;
  for (const auto& e : val) {
    gt.push_back(e.jrd);
    groups.push_back(e.group);
  }
  return mae_EA(pred, gt, groups);
}

}  // namespace

template <typename T>
std::vector<int> predict_examples(const Model<T>& model, const std::vector<Example>& examples, std::size_t batch_size) {
  NoGradGuard guard;
  std::vector<int> out;
  out.reserve(examples.size());
  const std::size_t n_cls = model.config().num_classes;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    std::vector<std::size_t> ids;
    for (std::size_t i = start; i < std::min(examples.size(), start + batch_size); ++i) ids.push_back(i);
    auto logits = model.forward(make_batch<T>(examples, ids, std::vector<bool>(ids.size(), false)));
    for (std::size_t b = 0; b < ids.size(); ++b) {
      out.push_back(predict_jrd(logits.data().subspan(b * n_cls, n_cls)));
    }
  }
  return out;
}

template <typename T>
FitResult<T> fit(Model<T> model, const std::vector<Example>& train, const std::vector<Example>& val,
                 const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  FitResult<T> result;
  if (config.epochs == 0) {
    result.model = std::move(model);
    return result;
  }
  if (train.empty()) throw ContractError("fit: empty training set");
  const int n_cls = static_cast<int>(model.config().num_classes);
  std::vector<LabelDistribution> labels;
  labels.reserve(train.size());
  for (const auto& e : train) {
    if (e.jrd < 0 || e.jrd >= n_cls) throw ContractError("fit: label " + std::to_string(e.jrd) + " out of range");
    labels.push_back(make_labels(config.labels, e.jrd, n_cls));
  }

  apply_freeze_mask(model, freeze_mask(model, config.strategy));
  SgdMomentum<T> optimizer(config.momentum, config.weight_decay);
  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution flip_coin(config.flip_probability);

  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  std::size_t step = 0;
  double best_ea = std::numeric_limits<double>::infinity();
  bool have_best = false;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = cosine_lr(step, total_steps, config.lr0);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
      std::vector<bool> flip(ids.size());
      std::vector<LabelDistribution> batch_labels;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        flip[k] = flip_coin(rng);
        batch_labels.push_back(labels[ids[k]]);
      }
      const double lr = cosine_lr(step, total_steps, config.lr0);
      try {
        model.zero_grad();
        auto loss = soft_cross_entropy(model.forward(make_batch<T>(train, ids, flip)), batch_labels);
        const double value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) throw NumericError("loss is not finite");
        loss.backward();
        optimizer.step(model.parameters(), lr);
        loss_sum += value * static_cast<double>(ids.size());
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "training diverged at step " << step << " (epoch " << epoch << ", lr " << lr << ", batch ";
        for (std::size_t k = 0; k < ids.size(); ++k) msg << (k ? "," : "") << train[ids[k]].object_id;
        msg << "): " << e.what();
        throw NumericError(msg.str());
      }
      ++step;
    }
    entry.train_loss = loss_sum / static_cast<double>(train.size());
    try {
      entry.val_ea = validation_ea(model, val);
    } catch (const NumericError& e) {
      throw NumericError("validation diverged after epoch " + std::to_string(epoch) + " (step " + std::to_string(step) +
                         "): " + e.what());
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (!val.empty() && entry.val_ea < best_ea) {
      best_ea = entry.val_ea;
      result.model = model.clone();
      result.best_epoch = epoch;
      have_best = true;
    }
  }
  if (!have_best) {
    result.model = std::move(model);
    result.best_epoch = config.epochs;
  }
  result.model.zero_grad();
  return result;
}

void save_epoch_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_EA,lr\n" << std::setprecision(17);
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_ea << ',' << e.lr << '\n';
}

template FreezeMask freeze_mask(const Model<float>&, Strategy);
template FreezeMask freeze_mask(const Model<double>&, Strategy);
template void apply_freeze_mask(Model<float>&, const FreezeMask&);
template void apply_freeze_mask(Model<double>&, const FreezeMask&);
template class SgdMomentum<float>;
template class SgdMomentum<double>;
template FitResult<float> fit(Model<float>, const std::vector<Example>&, const std::vector<Example>&,
                              const TrainConfig&, const EpochCallback&);
template FitResult<double> fit(Model<double>, const std::vector<Example>&, const std::vector<Example>&,
                               const TrainConfig&, const EpochCallback&);
template std::vector<int> predict_examples(const Model<float>&, const std::vector<Example>&, std::size_t);
template std::vector<int> predict_examples(const Model<double>&, const std::vector<Example>&, std::size_t);

}  // namespace dtjrd
