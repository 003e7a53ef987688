#include "dtjrd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dtjrd::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
void check_finite(const std::vector<T>& values, const char* op) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

// Builds the output vertex; records inputs only when a gradient can flow.
template <typename T>
NodePtr<T> make_result(const char* op, Shape shape, std::vector<T> value,
                       std::initializer_list<const Tensor<T>*> inputs) {
  check_finite(value, op);
  auto node = std::make_shared<detail::Node<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (!NoGradGuard::enabled()) {
    for (const Tensor<T>* in : inputs) {
      if (in->requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const Tensor<T>* in : inputs) node->inputs.push_back(in->node());
    }
  }
  return node;
}

template <typename T>
NodePtr<T> make_result(const char* op, Shape shape, std::vector<T> value,
                       const std::vector<Tensor<T>>& inputs) {
  check_finite(value, op);
  auto node = std::make_shared<detail::Node<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (!NoGradGuard::enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const auto& in : inputs) node->inputs.push_back(in.node());
    }
  }
  return node;
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Flat source indices of a and b for each output element.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;
};

std::vector<std::size_t> broadcast_indices(const Shape& src, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - src.size();
  std::vector<std::size_t> src_strides(rank, 0);
  auto s = strides_of(src);
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_strides[offset + i] = src[i] == 1 ? 0 : s[i];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t flat = 0;
  for (std::size_t k = 0; k < n; ++k) {
    idx[k] = flat;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      flat += src_strides[ax];
      if (counter[ax] < out[ax]) break;
      flat -= src_strides[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return idx;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[i] = std::max(da, db);
  }
  plan.ia = broadcast_indices(a, plan.out);
  plan.ib = broadcast_indices(b, plan.out);
  return plan;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Bwd bwd) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), op));
  const std::size_t n = shape_numel(plan->out);
  std::vector<T> out(n);
  auto av = a.data();
  auto bv = b.data();
  if (plan->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[plan->ia[i]], bv[plan->ib[i]]);
  }
  auto node = make_result<T>(op, plan->out, std::move(out), {&a, &b});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    auto* nb = b.node().get();
    node->backward = [self, na, nb, plan, bwd]() {
      const auto& g = self->grad;
      T* ga = na->requires_grad ? na->ensure_grad().data() : nullptr;
      T* gb = nb->requires_grad ? nb->ensure_grad().data() : nullptr;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t ia = plan->same ? i : plan->ia[i];
        const std::size_t ib = plan->same ? i : plan->ib[i];
        T da, db;
        bwd(na->value[ia], nb->value[ib], g[i], da, db);
        if (ga) ga[ia] += da;
        if (gb) gb[ib] += db;
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

// C[m, n] += A[m, k] * B[k, n] for one matrix triple.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m, k] += dC[m, n] * B[k, n]^T
template <typename T>
void gemm_acc_bt(const T* dc, const T* b, T* da, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// dB[k, n] += A[m, k]^T * dC[m, n]
template <typename T>
void gemm_acc_at(const T* a, const T* dc, T* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * drow[j];
    }
  }
}

// Splits a shape into (outer, axis, inner) around the given axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("add", a, b, [](T x, T y) { return x + y; },
                   [](T, T, T g, T& da, T& db) { da = g; db = g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("sub", a, b, [](T x, T y) { return x - y; },
                   [](T, T, T g, T& da, T& db) { da = g; db = -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("mul", a, b, [](T x, T y) { return x * y; },
                   [](T x, T y, T g, T& da, T& db) { da = g * y; db = g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= s;
  auto node = make_result<T>("scale", a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na, s]() {
      auto& ga = na->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self->grad[i];
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw DimensionError("matmul: operands must have rank >= 2");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t k = as.back();
  if (bs[bs.size() - 2] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(as) + " x " + shape_str(bs));
  }
  const std::size_t n = bs.back();
  const bool shared = bs.size() == 2;
  std::size_t batch = 1, m = as[as.size() - 2];
  if (!shared) {
    if (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      throw DimensionError("matmul: batch dimensions differ, " + shape_str(as) + " x " + shape_str(bs));
    }
    for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  } else {
    m = a.numel() / k;  // all leading axes fold into rows
  }
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  std::vector<T> out(shape_numel(out_shape), T(0));
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm_acc(ap + bi * m * k, shared ? bp : bp + bi * k * n, out.data() + bi * m * n, m, k, n);
  }
  auto node = make_result<T>("matmul", out_shape, std::move(out), {&a, &b});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    auto* nb = b.node().get();
    node->backward = [self, na, nb, batch, m, k, n, shared]() {
      const T* dc = self->grad.data();
      if (na->requires_grad) {
        T* da = na->ensure_grad().data();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const T* bmat = shared ? nb->value.data() : nb->value.data() + bi * k * n;
          gemm_acc_bt(dc + bi * m * n, bmat, da + bi * m * k, m, k, n);
        }
      }
      if (nb->requires_grad) {
        T* db = nb->ensure_grad().data();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          gemm_acc_at(na->value.data() + bi * m * k, dc + bi * m * n, shared ? db : db + bi * k * n, m, k, n);
        }
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (w.rank() != 2 || bias.rank() != 1 || bias.dim(0) != w.dim(1)) {
    throw DimensionError("linear: expected w[D,E] and bias[E], got " + shape_str(w.shape()) + " and " +
                         shape_str(bias.shape()));
  }
  return add(matmul(x, w), bias);
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& perm) {
  const std::size_t rank = a.rank();
  if (perm.size() != rank) throw DimensionError("permute: permutation rank mismatch");
  std::vector<bool> used(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || used[p]) throw DimensionError("permute: invalid permutation");
    used[p] = true;
  }
  const auto in_strides = strides_of(a.shape());
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = a.shape()[perm[i]];
    step[i] = in_strides[perm[i]];
  }
  const std::size_t n = a.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t flat = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (*src)[k] = flat;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      flat += step[ax];
      if (counter[ax] < out_shape[ax]) break;
      flat -= step[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  std::vector<T> out(n);
  auto av = a.data();
  for (std::size_t k = 0; k < n; ++k) out[k] = av[(*src)[k]];
  auto node = make_result<T>("permute", out_shape, std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na, src]() {
      auto& ga = na->ensure_grad();
      for (std::size_t k = 0; k < src->size(); ++k) ga[(*src)[k]] += self->grad[k];
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) throw DimensionError("transpose: rank must be >= 2");
  std::vector<std::size_t> perm(a.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(a, perm);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto node = make_result<T>("reshape", std::move(shape), std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na]() {
      auto& ga = na->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self->grad[i];
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || length == 0 || start + length > a.dim(axis)) {
    throw DimensionError("slice: out of range on " + shape_str(a.shape()));
  }
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<T> out(s.outer * length * s.inner);
  auto av = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(av.begin() + (o * s.len + start) * s.inner, length * s.inner,
                out.begin() + o * length * s.inner);
  }
  auto node = make_result<T>("slice", out_shape, std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na, s, start, length]() {
      auto& ga = na->ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* g = self->grad.data() + o * length * s.inner;
        T* dst = ga.data() + (o * s.len + start) * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += g[i];
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.shape()[i] != first[i]) {
        throw DimensionError("concat: " + shape_str(p.shape()) + " vs " + shape_str(first));
      }
    }
    out_shape[axis] += p.shape()[axis];
  }
  const AxisSplit os = split_axis(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis];
    auto pv = p.data();
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy_n(pv.begin() + o * len * os.inner, len * os.inner,
                  out.begin() + (o * os.len + offset) * os.inner);
    }
    offset += len;
  }
  auto node = make_result<T>("concat", out_shape, std::move(out), parts);
  if (node->requires_grad) {
    auto* self = node.get();
    node->backward = [self, os, offsets, axis]() {
      for (std::size_t pi = 0; pi < self->inputs.size(); ++pi) {
        auto* np = self->inputs[pi].get();
        if (!np->requires_grad) continue;
        auto& gp = np->ensure_grad();
        const std::size_t len = np->shape[axis];
        for (std::size_t o = 0; o < os.outer; ++o) {
          const T* g = self->grad.data() + (o * os.len + offsets[pi]) * os.inner;
          T* dst = gp.data() + o * len * os.inner;
          for (std::size_t i = 0; i < len * os.inner; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& shape) {
  const BroadcastPlan plan = plan_broadcast(a.shape(), shape, "broadcast_to");
  if (plan.out != shape) {
    throw DimensionError("broadcast_to: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(
      plan.same ? std::vector<std::size_t>{} : plan.ia);
  const std::size_t n = shape_numel(shape);
  std::vector<T> out(n);
  auto av = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[plan.same ? i : (*idx)[i]];
  auto node = make_result<T>("broadcast_to", shape, std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    const bool same = plan.same;
    node->backward = [self, na, idx, same]() {
      auto& ga = na->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) ga[same ? i : (*idx)[i]] += self->grad[i];
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  auto node = make_result<T>("sum", Shape{}, std::vector<T>{acc}, {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na]() {
      auto& ga = na->ensure_grad();
      const T g = self->grad[0];
      for (T& v : ga) v += g;
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw DimensionError("mean: axis out of range");
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(s.outer * s.inner, T(0));
  auto av = a.data();
  const T inv = T(1) / static_cast<T>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const T* src = av.data() + (o * s.len + l) * s.inner;
      T* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  for (T& v : out) v *= inv;
  auto node = make_result<T>("mean", out_shape, std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na, s, inv]() {
      auto& ga = na->ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* g = self->grad.data() + o * s.inner;
        for (std::size_t l = 0; l < s.len; ++l) {
          T* dst = ga.data() + (o * s.len + l) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * inv;
        }
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("softmax: rank must be >= 1");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  std::vector<T> out(a.numel());
  auto av = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * n;
    T* y = out.data() + r * n;
    const T mx = *std::max_element(x, x + n);
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) total += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= total;
  }
  auto node = make_result<T>("softmax", a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na, n, rows]() {
      auto& ga = na->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = self->value.data() + r * n;
        const T* g = self->grad.data() + r * n;
        T dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < n; ++i) ga[r * n + i] += y[i] * (g[i] - dot);
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("log_softmax: rank must be >= 1");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  std::vector<T> out(a.numel());
  auto av = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * n;
    T* y = out.data() + r * n;
    const T mx = *std::max_element(x, x + n);
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(x[i] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  }
  auto node = make_result<T>("log_softmax", a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na, n, rows]() {
      auto& ga = na->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = self->value.data() + r * n;
        const T* g = self->grad.data() + r * n;
        T gsum = 0;
        for (std::size_t i = 0; i < n; ++i) gsum += g[i];
        for (std::size_t i = 0; i < n; ++i) ga[r * n + i] += g[i] - std::exp(y[i]) * gsum;
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * inv_sqrt2));
  }
  auto node = make_result<T>("gelu", a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* na = a.node().get();
    node->backward = [self, na, inv_sqrt2]() {
      const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
      auto& ga = na->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const T x = na->value[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        ga[i] += self->grad[i] * (cdf + x * pdf);
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift, double eps) {
  if (!(eps > 0)) throw ContractError("layer_norm: epsilon must be positive");
  if (x.rank() < 1) throw DimensionError("layer_norm: rank must be >= 1");
  const std::size_t d = x.shape().back();
  if (scale.shape() != Shape{d} || shift.shape() != Shape{d}) {
    throw DimensionError("layer_norm: scale/shift must be [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  auto xv = x.data();
  auto sv = scale.data();
  auto bv = shift.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*rstd)[r] = rs;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (xr[i] - mu) * rs;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * sv[i] + bv[i];
    }
  }
  auto node = make_result<T>("layer_norm", x.shape(), std::move(out), {&x, &scale, &shift});
  if (node->requires_grad) {
    auto* self = node.get();
    auto* nx = x.node().get();
    auto* ns = scale.node().get();
    auto* nb = shift.node().get();
    node->backward = [self, nx, ns, nb, xhat, rstd, d, rows]() {
      const T* g = self->grad.data();
      if (ns->requires_grad || nb->requires_grad) {
        T* gs = ns->requires_grad ? ns->ensure_grad().data() : nullptr;
        T* gb = nb->requires_grad ? nb->ensure_grad().data() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < d; ++i) {
            if (gs) gs[i] += g[r * d + i] * (*xhat)[r * d + i];
            if (gb) gb[i] += g[r * d + i];
          }
        }
      }
      if (nx->requires_grad) {
        auto& gx = nx->ensure_grad();
        const T* sv = ns->value.data();
        std::vector<T> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t i = 0; i < d; ++i) {
            dxhat[i] = g[r * d + i] * sv[i];
            mean_d += dxhat[i];
            mean_dx += dxhat[i] * (*xhat)[r * d + i];
          }
          mean_d /= static_cast<T>(d);
          mean_dx /= static_cast<T>(d);
          for (std::size_t i = 0; i < d; ++i) {
            gx[r * d + i] += (*rstd)[r] * (dxhat[i] - mean_d - (*xhat)[r * d + i] * mean_dx);
          }
        }
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

#define DTJRD_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                 \
  template Tensor<T> transpose(const Tensor<T>&);                                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);             \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                         \
  template Tensor<T> broadcast_to(const Tensor<T>&, const Shape&);                               \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                                        \
  template Tensor<T> softmax(const Tensor<T>&);                                                  \
  template Tensor<T> log_softmax(const Tensor<T>&);                                              \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);

DTJRD_INSTANTIATE_OPS(float)
DTJRD_INSTANTIATE_OPS(double)

#undef DTJRD_INSTANTIATE_OPS

}  // namespace dtjrd::ops
