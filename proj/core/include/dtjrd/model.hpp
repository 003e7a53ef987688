#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dtjrd/tensor.hpp"

namespace dtjrd {

struct ModelConfig {
  std::size_t image_size = 96;
  std::size_t patch_size = 32;
  std::size_t dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_dim = 128;
  std::size_t num_classes = 64;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_features() const { return 3 * patch_size * patch_size; }

  /// Throws ConfigError when the geometry is inconsistent.
  void validate() const;

  /// Desk-scale default: 96px input, 32px patches, 4 blocks of width 64.
  static ModelConfig toy() { return {}; }
  /// ViT-L/32 at 384px.
  static ModelConfig vit_large_384() { return {384, 32, 1024, 24, 16, 4096, 64}; }

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

/// Weights recorded per multi-head attention call when requested.
template <typename T>
struct AttentionProbe {
  std::vector<Tensor<T>> weights;  // one [B, H, L, L] per block
};

template <typename T>
struct AttentionParams {
  const Tensor<T>& qkv_w;
  const Tensor<T>& qkv_b;
  const Tensor<T>& proj_w;
  const Tensor<T>& proj_b;
  std::size_t heads;
};

/// Self-attention over x[B, L, D]; returns [B, L, D]. When weights_out is
/// non-null it receives the [B, H, L, L] attention probabilities.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p,
                               Tensor<T>* weights_out = nullptr);

/// Non-overlapping patches of image[3, H, W] as rows [L, 3*p*p] in raster
/// order. Each row is laid out channel-major, then patch row, then column.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch_size);

/// Resizes the grid part of pos_embed[1 + L_pt, D] to a grid x grid layout.
/// Row 0 (class token) is carried over unchanged.
template <typename T>
Tensor<T> interpolate_pos_embed(const Tensor<T>& pos_embed, std::size_t grid);

/// The JRD transformer: patch embedding, class token, position embedding,
/// pre-norm encoder blocks, layer-normed average pool over patch tokens and
/// a linear head over num_classes QP levels.
template <typename T>
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, std::uint64_t seed);

  /// Empty-valued model with canonical names and shapes; used by loaders.
  static Model zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& param(const std::string& name);
  const Parameter<T>& param(const std::string& name) const;
  bool has_param(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t parameter_count() const;

  /// images[B, 3, S, S] -> logits[B, num_classes].
  Tensor<T> forward(const Tensor<T>& images, AttentionProbe<T>* probe = nullptr) const;

  /// Forward from already-computed patch rows [B, L, 3*p*p].
  Tensor<T> forward_patches(const Tensor<T>& patches, AttentionProbe<T>* probe = nullptr) const;

  /// Final-layer tokens [B, 1+L, D] to logits; exposed for pooling checks.
  Tensor<T> head_from_tokens(const Tensor<T>& tokens) const;

  /// Encoder output tokens [B, 1+L, D] before final layer norm.
  Tensor<T> encode(const Tensor<T>& patches, AttentionProbe<T>* probe = nullptr) const;

  void zero_grad();

  /// Deep copy of all parameter values (no gradients).
  Model clone() const;

 private:
  void add_param(std::string name, Tensor<T> tensor);

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Argmax over logits; ties resolve to the smaller class index.
int predict_jrd(std::span<const float> logits);
int predict_jrd(std::span<const double> logits);

/// Sum of class index weighted by softmax probability.
double expected_jrd(std::span<const double> logits);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace dtjrd
