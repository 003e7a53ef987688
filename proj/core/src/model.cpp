#include "dtjrd/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dtjrd/ops.hpp"
#include "dtjrd/resize.hpp"

namespace dtjrd {

void ModelConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || dim == 0 || depth == 0 || heads == 0 || mlp_dim == 0 ||
      num_classes == 0) {
    throw ConfigError("model config fields must be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (dim % heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  }
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p, Tensor<T>* weights_out) {
  if (x.rank() != 3) throw DimensionError("attention: expected x[B,L,D], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  if (p.heads == 0 || d % p.heads != 0) {
    throw ConfigError("attention: dim " + std::to_string(d) + " is not divisible by " +
                      std::to_string(p.heads) + " heads");
  }
  const std::size_t h = p.heads, dh = d / h;

  // [B, L, 3D] -> [3, B, H, L, dh]
  auto qkv = ops::linear(x, p.qkv_w, p.qkv_b);
  qkv = ops::permute(ops::reshape(qkv, {b, l, 3, h, dh}), {2, 0, 3, 1, 4});
  auto q = ops::reshape(ops::slice(qkv, 0, 0, 1), {b, h, l, dh});
  auto k = ops::reshape(ops::slice(qkv, 0, 1, 1), {b, h, l, dh});
  auto v = ops::reshape(ops::slice(qkv, 0, 2, 1), {b, h, l, dh});

  auto scores = ops::scale(ops::matmul(q, ops::transpose(k)), static_cast<T>(1.0 / std::sqrt(double(dh))));
  auto attn = ops::softmax(scores);
  if (weights_out) *weights_out = attn;
  auto ctx = ops::matmul(attn, v);  // [B, H, L, dh]
  ctx = ops::reshape(ops::permute(ctx, {0, 2, 1, 3}), {b, l, d});
  return ops::linear(ctx, p.proj_w, p.proj_b);
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch_size) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("patchify: expected image[3,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t hgt = image.dim(1), wid = image.dim(2);
  if (patch_size == 0 || hgt % patch_size != 0 || wid % patch_size != 0) {
    throw ContractError("patchify: image " + std::to_string(hgt) + "x" + std::to_string(wid) +
                        " is not divisible by patch " + std::to_string(patch_size));
  }
  const std::size_t gh = hgt / patch_size, gw = wid / patch_size;
  const std::size_t feat = 3 * patch_size * patch_size;
  std::vector<T> rows(gh * gw * feat);
  auto src = image.data();
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      T* row = rows.data() + (py * gw + px) * feat;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t iy = 0; iy < patch_size; ++iy) {
          const T* s = src.data() + (c * hgt + py * patch_size + iy) * wid + px * patch_size;
          std::copy_n(s, patch_size, row + (c * patch_size + iy) * patch_size);
        }
      }
    }
  }
  return Tensor<T>(Shape{gh * gw, feat}, std::move(rows));
}

template <typename T>
Tensor<T> interpolate_pos_embed(const Tensor<T>& pos_embed, std::size_t grid) {
  if (pos_embed.rank() != 2 || pos_embed.dim(0) < 2) {
    throw DimensionError("interpolate_pos_embed: expected [1+L, D], got " + shape_str(pos_embed.shape()));
  }
  if (grid == 0) throw ContractError("interpolate_pos_embed: target grid must be >= 1");
  const std::size_t l_src = pos_embed.dim(0) - 1, d = pos_embed.dim(1);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(l_src))));
  if (side * side != l_src) {
    throw ContractError("interpolate_pos_embed: " + std::to_string(l_src) + " grid rows is not a perfect square");
  }
  auto src = pos_embed.data();
  std::vector<T> out(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(d));
  if (side == grid) {
    out.assign(src.begin(), src.end());
  } else {
    Tensor<T> g(Shape{side, side, d}, std::vector<T>(src.begin() + static_cast<std::ptrdiff_t>(d), src.end()));
    auto resized = bicubic_resize_2d(g, grid, grid);
    out.insert(out.end(), resized.data().begin(), resized.data().end());
  }
  return Tensor<T>(Shape{1 + grid * grid, d}, std::move(out));
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : Model(zeros(config)) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto xavier = [&](Tensor<T>& t, double fan_in, double fan_out) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (T& v : t.mutable_data()) v = static_cast<T>(limit * uni(rng));
  };
  auto gaussian = [&](Tensor<T>& t, double std) {
    for (T& v : t.mutable_data()) v = static_cast<T>(std * normal(rng));
  };
  const double d = static_cast<double>(config.dim);
  const double m = static_cast<double>(config.mlp_dim);

  xavier(param("patch_embed.w").tensor, static_cast<double>(config.patch_features()), d);
  gaussian(param("class_token").tensor, 0.02);
  gaussian(param("pos_embed").tensor, 0.02);
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    xavier(param(p + "attn.qkv.w").tensor, d, d);
    xavier(param(p + "attn.proj.w").tensor, d, d);
    xavier(param(p + "mlp.w1").tensor, d, m);
    xavier(param(p + "mlp.w2").tensor, m, d);
  }
  // head stays zero, as in the reference ViT fine-tuning recipe
}

template <typename T>
Model<T> Model<T>::zeros(const ModelConfig& config) {
  config.validate();
  Model model;
  model.config_ = config;
  const std::size_t d = config.dim, m = config.mlp_dim;
  auto ones = [](std::size_t n) { return Tensor<T>(Shape{n}, T(1)); };
  auto zero = [](Shape s) { return Tensor<T>(std::move(s), T(0)); };

  model.add_param("patch_embed.w", zero({config.patch_features(), d}));
  model.add_param("patch_embed.b", zero({d}));
  model.add_param("class_token", zero({d}));
  model.add_param("pos_embed", zero({1 + config.num_patches(), d}));
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    model.add_param(p + "ln1.scale", ones(d));
    model.add_param(p + "ln1.shift", zero({d}));
    model.add_param(p + "attn.qkv.w", zero({d, 3 * d}));
    model.add_param(p + "attn.qkv.b", zero({3 * d}));
    model.add_param(p + "attn.proj.w", zero({d, d}));
    model.add_param(p + "attn.proj.b", zero({d}));
    model.add_param(p + "ln2.scale", ones(d));
    model.add_param(p + "ln2.shift", zero({d}));
    model.add_param(p + "mlp.w1", zero({d, m}));
    model.add_param(p + "mlp.b1", zero({m}));
    model.add_param(p + "mlp.w2", zero({m, d}));
    model.add_param(p + "mlp.b2", zero({d}));
  }
  model.add_param("final_ln.scale", ones(d));
  model.add_param("final_ln.shift", zero({d}));
  model.add_param("head.w", zero({d, config.num_classes}));
  model.add_param("head.b", zero({config.num_classes}));
  return model;
}

template <typename T>
void Model<T>::add_param(std::string name, Tensor<T> tensor) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  index_[name] = params_.size();
  params_.push_back({std::move(name), std::move(tensor), true});
}

template <typename T>
Parameter<T>& Model<T>::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
const Parameter<T>& Model<T>::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& images, AttentionProbe<T>* probe) const {
  const std::size_t s = config_.image_size;
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != s || images.dim(3) != s) {
    throw ContractError("forward: expected images[B,3," + std::to_string(s) + "," + std::to_string(s) +
                        "], got " + shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  const std::size_t per_image = 3 * s * s;
  const std::size_t l = config_.num_patches(), f = config_.patch_features();
  std::vector<T> rows;
  rows.reserve(batch * l * f);
  for (std::size_t b = 0; b < batch; ++b) {
    auto first = images.data().begin() + static_cast<std::ptrdiff_t>(b * per_image);
    Tensor<T> img(Shape{3, s, s}, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(per_image)));
    auto p = patchify(img, config_.patch_size);
    rows.insert(rows.end(), p.data().begin(), p.data().end());
  }
  return forward_patches(Tensor<T>(Shape{batch, l, f}, std::move(rows)), probe);
}

template <typename T>
Tensor<T> Model<T>::encode(const Tensor<T>& patches, AttentionProbe<T>* probe) const {
  const std::size_t l = config_.num_patches();
  if (patches.rank() != 3 || patches.dim(1) != l || patches.dim(2) != config_.patch_features()) {
    throw ContractError("encode: expected patches[B," + std::to_string(l) + "," +
                        std::to_string(config_.patch_features()) + "], got " + shape_str(patches.shape()));
  }
  const std::size_t batch = patches.dim(0), d = config_.dim;
  auto x = ops::linear(patches, param("patch_embed.w").tensor, param("patch_embed.b").tensor);
  auto cls = ops::broadcast_to(param("class_token").tensor, {batch, 1, d});
  x = ops::concat<T>({cls, x}, 1);
  x = ops::add(x, param("pos_embed").tensor);

  for (std::size_t i = 0; i < config_.depth; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    auto hidden = ops::layer_norm(x, param(p + "ln1.scale").tensor, param(p + "ln1.shift").tensor);
    AttentionParams<T> ap{param(p + "attn.qkv.w").tensor, param(p + "attn.qkv.b").tensor,
                          param(p + "attn.proj.w").tensor, param(p + "attn.proj.b").tensor, config_.heads};
    Tensor<T> weights;
    x = ops::add(x, multi_head_attention(hidden, ap, probe ? &weights : nullptr));
    if (probe) probe->weights.push_back(weights);

    hidden = ops::layer_norm(x, param(p + "ln2.scale").tensor, param(p + "ln2.shift").tensor);
    hidden = ops::gelu(ops::linear(hidden, param(p + "mlp.w1").tensor, param(p + "mlp.b1").tensor));
    x = ops::add(x, ops::linear(hidden, param(p + "mlp.w2").tensor, param(p + "mlp.b2").tensor));
  }
  return x;
}

template <typename T>
Tensor<T> Model<T>::head_from_tokens(const Tensor<T>& tokens) const {
  const std::size_t l = config_.num_patches();
  if (tokens.rank() != 3 || tokens.dim(1) != l + 1 || tokens.dim(2) != config_.dim) {
    throw ContractError("head: expected tokens[B," + std::to_string(l + 1) + "," + std::to_string(config_.dim) +
                        "], got " + shape_str(tokens.shape()));
  }
  // The class token (index 0) is excluded from the pool.
  auto patch_tokens = ops::slice(tokens, 1, 1, l);
  auto normed = ops::layer_norm(patch_tokens, param("final_ln.scale").tensor, param("final_ln.shift").tensor);
  auto pooled = ops::mean(normed, 1);
  return ops::linear(pooled, param("head.w").tensor, param("head.b").tensor);
}

template <typename T>
Tensor<T> Model<T>::forward_patches(const Tensor<T>& patches, AttentionProbe<T>* probe) const {
  return head_from_tokens(encode(patches, probe));
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model copy;
  copy.config_ = config_;
  copy.index_ = index_;
  copy.params_.reserve(params_.size());
  for (const auto& p : params_) {
    Tensor<T> t(p.tensor.shape(), std::vector<T>(p.tensor.data().begin(), p.tensor.data().end()));
    t.set_requires_grad(p.tensor.requires_grad());
    copy.params_.push_back({p.name, std::move(t), p.trainable});
  }
  return copy;
}

namespace {
template <typename T>
int argmax_low(std::span<const T> logits) {
  if (logits.empty()) throw ContractError("predict_jrd: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}
}  // namespace

int predict_jrd(std::span<const float> logits) { return argmax_low(logits); }
int predict_jrd(std::span<const double> logits) { return argmax_low(logits); }

double expected_jrd(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("expected_jrd: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0, weighted = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(logits[i] - mx);
    total += e;
    weighted += e * static_cast<double>(i);
  }
  return weighted / total;
}

template Tensor<float> multi_head_attention(const Tensor<float>&, const AttentionParams<float>&, Tensor<float>*);
template Tensor<double> multi_head_attention(const Tensor<double>&, const AttentionParams<double>&, Tensor<double>*);
template Tensor<float> patchify(const Tensor<float>&, std::size_t);
template Tensor<double> patchify(const Tensor<double>&, std::size_t);
template Tensor<float> interpolate_pos_embed(const Tensor<float>&, std::size_t);
template Tensor<double> interpolate_pos_embed(const Tensor<double>&, std::size_t);
template class Model<float>;
template class Model<double>;

}  // namespace dtjrd
