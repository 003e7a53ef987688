#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dtjrd/errors.hpp"
#include "dtjrd/model.hpp"
#include "dtjrd/ops.hpp"
#include "dtjrd/resize.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dtjrd;
using testutil::max_grad_error;
using testutil::hermite_resize;
using testutil::random_tensor;
using TD = Tensor<double>;

TEST_CASE("matmul with the identity returns the other operand") {
  TD eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto a = random_tensor({3, 3}, 1);
  auto r = ops::matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(r.data()[i] == a.data()[i]);
}

TEST_CASE("softmax of equal logits is uniform and rows sum to one") {
  auto s = ops::softmax(TD({4}, {0, 0, 0, 0}));
  for (double v : s.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  auto r = ops::softmax(random_tensor({5, 7}, 2, -10, 10));
  for (std::size_t row = 0; row < 5; ++row) {
    double sum = 0;
    for (std::size_t j = 0; j < 7; ++j) sum += r.data()[row * 7 + j];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm output statistics") {
  TD ones({4}, 1.0), zeros({4}, 0.0);
  auto c = ops::layer_norm(TD({2, 4}, 3.5), ones, zeros);
  for (double v : c.data()) CHECK(v == 0.0);
  auto y = ops::layer_norm(random_tensor({6, 32}, 3, -5, 5), TD({32}, 1.0), TD({32}, 0.0));
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 32; ++j) m += y.data()[r * 32 + j];
    m /= 32;
    for (std::size_t j = 0; j < 32; ++j) v += std::pow(y.data()[r * 32 + j] - m, 2);
    v /= 32;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-4);
  }
}

TEST_CASE("gelu uses the exact erf form") {
  auto g = ops::gelu(TD({3}, {-1.0, 0.0, 2.0}));
  for (std::size_t i = 0; i < 3; ++i) {
    const double x = std::vector<double>{-1.0, 0.0, 2.0}[i];
    CHECK(g.data()[i] == doctest::Approx(0.5 * x * (1 + std::erf(x / std::sqrt(2.0)))).epsilon(1e-15));
  }
}

TEST_CASE("broadcasting and shape errors") {
  auto a = random_tensor({2, 3, 4}, 4);
  auto b = random_tensor({4}, 5);
  auto c = a + b;
  CHECK(c.shape() == Shape{2, 3, 4});
  CHECK(c.data()[5] == doctest::Approx(a.data()[5] + b.data()[1]));
  CHECK_THROWS_AS(a + random_tensor({3, 3}, 6), DimensionError);
  CHECK_THROWS_AS(ops::matmul(random_tensor({2, 3}, 7), random_tensor({4, 2}, 8)), DimensionError);
  CHECK_THROWS_AS(ops::reshape(a, {5, 5}), DimensionError);
}

TEST_CASE("non-finite results raise a numeric error naming the op") {
  TD big({2}, {1e308, 1.0});
  try {
    ops::scale(big, 10.0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }
}

TEST_CASE("backward basics and accumulation contract") {
  auto p = random_tensor({5}, 9);
  p.set_requires_grad(true);
  ops::sum(p).backward();
  for (double g : p.grad()) CHECK(g == 1.0);
  p.zero_grad();
  ops::sum(p * p).backward();
  for (std::size_t i = 0; i < 5; ++i) CHECK(p.grad()[i] == doctest::Approx(2 * p.data()[i]));
  ops::sum(p * p).backward();  // accumulates without reset
  for (std::size_t i = 0; i < 5; ++i) CHECK(p.grad()[i] == doctest::Approx(4 * p.data()[i]));
  CHECK_THROWS_AS((p * p).backward(), ContractError);
}

TEST_CASE("finite-difference checks per op") {
  auto w = random_tensor({2, 3, 4}, 100);  // fixed projection makes every output matter
  auto project = [&](const TD& t) { return ops::sum(t * w); };

  SUBCASE("add/sub/mul with broadcasting") {
    std::vector<TD> in{random_tensor({2, 3, 4}, 11), random_tensor({3, 1}, 12)};
    CHECK(max_grad_error(in, [&] { return project((in[0] + in[1]) * in[0] - in[1]); }) < 1e-6);
  }
  SUBCASE("matmul, batched and shared rhs") {
    std::vector<TD> in{random_tensor({2, 3, 5}, 13), random_tensor({5, 4}, 14), random_tensor({2, 5, 4}, 15)};
    CHECK(max_grad_error(in, [&] { return project(ops::matmul(in[0], in[1]) + ops::matmul(in[0], in[2])); }) < 1e-6);
  }
  SUBCASE("linear, permute, transpose, reshape") {
    std::vector<TD> in{random_tensor({2, 3, 6}, 16), random_tensor({6, 4}, 17), random_tensor({4}, 18)};
    CHECK(max_grad_error(in, [&] {
            auto y = ops::linear(in[0], in[1], in[2]);            // [2,3,4]
            auto z = ops::permute(ops::transpose(y), {0, 2, 1});  // back to [2,3,4]
            return project(ops::reshape(ops::reshape(z, {6, 4}), {2, 3, 4}) * y);
          }) < 1e-6);
  }
  SUBCASE("slice, concat, broadcast_to, mean") {
    std::vector<TD> in{random_tensor({2, 3, 4}, 19), random_tensor({1, 3, 1}, 20)};
    CHECK(max_grad_error(in, [&] {
            auto a = ops::slice(in[0], 2, 1, 2);
            auto b = ops::slice(in[0], 2, 0, 2);
            auto c = ops::concat<double>({a, b}, 2);
            auto m = ops::mean(c, 1);  // [2,4]
            return project(c * ops::broadcast_to(in[1], {2, 3, 4})) + ops::sum(m * m);
          }) < 1e-6);
  }
  SUBCASE("softmax, log_softmax, gelu") {
    std::vector<TD> in{random_tensor({2, 3, 4}, 21, -3, 3)};
    CHECK(max_grad_error(in, [&] { return project(ops::softmax(in[0]) + ops::log_softmax(in[0]) + ops::gelu(in[0])); }) <
          1e-6);
  }
  SUBCASE("layer_norm with learned scale and shift") {
    std::vector<TD> in{random_tensor({2, 3, 4}, 22, -2, 2), random_tensor({4}, 23), random_tensor({4}, 24)};
    CHECK(max_grad_error(in, [&] { return project(ops::layer_norm(in[0], in[1], in[2])); }) < 1e-5);
  }
}

TEST_CASE("multi-head attention contracts") {
  const std::size_t D = 8, H = 2;
  auto qkv_w = random_tensor({D, 3 * D}, 30), qkv_b = random_tensor({3 * D}, 31);
  auto proj_w = random_tensor({D, D}, 32), proj_b = random_tensor({D}, 33);
  AttentionParams<double> p{qkv_w, qkv_b, proj_w, proj_b, H};

  SUBCASE("single token passes its value projection through") {
    auto x = random_tensor({1, 1, D}, 34);
    auto y = multi_head_attention(x, p);
    auto qkv = ops::linear(x, qkv_w, qkv_b);
    auto v = ops::slice(qkv, 2, 2 * D, D);
    auto expect = ops::linear(v, proj_w, proj_b);
    for (std::size_t i = 0; i < D; ++i) CHECK(y.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
  }
  SUBCASE("attention rows are stochastic") {
    TD weights;
    multi_head_attention(random_tensor({2, 5, D}, 35), p, &weights);
    CHECK(weights.shape() == Shape{2, H, 5, 5});
    for (std::size_t r = 0; r < 2 * H * 5; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += weights.data()[r * 5 + j];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  SUBCASE("permuting batch entries permutes outputs") {
    auto x = random_tensor({2, 4, D}, 36);
    auto swapped = ops::concat<double>({ops::slice(x, 0, 1, 1), ops::slice(x, 0, 0, 1)}, 0);
    auto y = multi_head_attention(x, p), ys = multi_head_attention(swapped, p);
    const std::size_t n = 4 * D;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(ys.data()[i] == y.data()[n + i]);
      CHECK(ys.data()[n + i] == y.data()[i]);
    }
  }
  SUBCASE("heads must divide the width") {
    AttentionParams<double> bad{qkv_w, qkv_b, proj_w, proj_b, 3};
    CHECK_THROWS_AS(multi_head_attention(random_tensor({1, 2, D}, 37), bad), ConfigError);
  }
}

TEST_CASE("bicubic resize") {
  SUBCASE("identity size") {
    auto g = random_tensor({5, 6, 3}, 40);
    auto r = bicubic_resize_2d(g, 5, 6);
    for (std::size_t i = 0; i < g.numel(); ++i) CHECK(std::abs(r.data()[i] - g.data()[i]) < 1e-6);
  }
  SUBCASE("constant grid stays constant") {
    auto r = bicubic_resize_2d(TD({7, 7, 2}, 0.375), 12, 12);
    for (double v : r.data()) CHECK(v == doctest::Approx(0.375).epsilon(1e-15));
  }
  SUBCASE("7x7 to 12x12 against the Hermite-form reference") {
    // channel 0: ramp, channel 1: ramp plus a curved term
    std::vector<double> g(7 * 7 * 2), ch0(49), ch1(49);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 7; ++x) {
        ch0[y * 7 + x] = 0.3 * x - 0.7 * y + 1.0;
        ch1[y * 7 + x] = ch0[y * 7 + x] + 0.05 * x * x * y - std::sin(0.9 * x + 0.4 * y);
        g[(y * 7 + x) * 2] = ch0[y * 7 + x];
        g[(y * 7 + x) * 2 + 1] = ch1[y * 7 + x];
      }
    auto r = bicubic_resize_2d(TD({7, 7, 2}, g), 12, 12);
    const auto o0 = hermite_resize(ch0, 7, 7, 12, 12), o1 = hermite_resize(ch1, 7, 7, 12, 12);
    double worst = 0;
    for (std::size_t i = 0; i < 144; ++i) {
      worst = std::max({worst, std::abs(r.data()[i * 2] - o0[i]), std::abs(r.data()[i * 2 + 1] - o1[i])});
    }
    CHECK(worst < 1e-5);
  }
  SUBCASE("contract errors") {
    CHECK_THROWS_AS(bicubic_resize_2d(TD({4, 4, 1}), 0, 3), ContractError);
    CHECK_THROWS_AS(bicubic_resize_2d(TD({1, 4, 1}), 3, 3), ContractError);
  }
}

TEST_CASE("bilinear planar resize keeps same-size input") {
  auto v = testutil::random_values(3 * 5 * 4, 41);
  std::vector<float> f(v.begin(), v.end());
  auto r = bilinear_resize_planar(f, 3, 5, 4, 5, 4);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(r[i] - f[i]) < 1e-6);
}

TEST_CASE("float and double forward agree") {
  auto xd = random_tensor({2, 3, 4}, 50);
  std::vector<float> xf(xd.data().begin(), xd.data().end());
  auto sd = ops::softmax(xd);
  auto sf = ops::softmax(Tensor<float>({2, 3, 4}, xf));
  for (std::size_t i = 0; i < 24; ++i) CHECK(std::abs(sd.data()[i] - sf.data()[i]) < 1e-6);
}
