#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dtjrd/labels.hpp"
#include "dtjrd/model.hpp"

namespace dtjrd {

/// LP trains the head only, FF everything, DAFT everything except the patch
/// embedding, class token, position embedding and final layer norm.
enum class Strategy { kLP, kFF, kDAFT };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct TrainConfig {
  Strategy strategy = Strategy::kDAFT;
  LabelSpec labels;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double flip_probability = 0.5;

  void validate() const;
};

using FreezeMask = std::map<std::string, bool>;  // name -> trainable

template <typename T>
FreezeMask freeze_mask(const Model<T>& model, Strategy strategy);
template <typename T>
void apply_freeze_mask(Model<T>& model, const FreezeMask& mask);

/// lr0 * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

/// Momentum SGD with coupled weight decay:
///   v <- momentum * v + g + weight_decay * p;  p <- p - lr * v
/// Frozen parameters are never touched.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay);
  void step(std::vector<Parameter<T>>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, std::vector<T>> velocity_;
};

struct Example {
  Tensor<float> image;  // [3, S, S], normalized
  int jrd = 0;
  std::string object_id;
  std::string group;  // source image id
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_ea = 0;  // NaN when there is no validation set
  double lr = 0;      // rate at the first step of the epoch
};

template <typename T>
struct FitResult {
  Model<T> model;  // parameters of the epoch with the lowest validation E_A
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

template <typename T>
FitResult<T> fit(Model<T> model, const std::vector<Example>& train, const std::vector<Example>& val,
                 const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Argmax class per example, evaluated in batches without recording a tape.
template <typename T>
std::vector<int> predict_examples(const Model<T>& model, const std::vector<Example>& examples,
                                  std::size_t batch_size = 32);

/// Header "epoch,train_loss,val_EA,lr".
void save_epoch_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace dtjrd
