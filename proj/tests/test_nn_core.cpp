#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "bslip/adam.hpp"
#include "bslip/error.hpp"
#include "bslip/gradcheck.hpp"
#include "bslip/layers.hpp"
#include "bslip/tcn.hpp"

using namespace bslip;
using namespace bslip::nn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values) v = rng.normal();
  return t;
}

// Hand-written loop form, kept independent of the library's indexing.
double conv_oracle(const Tensor& in, const Tensor& w, std::size_t d, std::size_t c,
                   std::size_t t) {
  const std::size_t cin = in.dim(0), steps = in.dim(1), k = w.dim(2);
  double s = 0.0;
  for (std::size_t i = 0; i < cin; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) -
                                 static_cast<std::ptrdiff_t>(j * d);
      if (src < 0) continue;
      s += w[(c * cin + i) * k + j] * in[i * steps + static_cast<std::size_t>(src)];
    }
  }
  return s;
}

}  // namespace

TEST(Conv, HandConvolution) {
  const Tensor in({1, 3}, {1, 2, 4});
  const Tensor w({1, 1, 2}, {1, -1});
  const Tensor out = dilated_causal_conv1d(in, w, 1);
  EXPECT_EQ(out.values, (std::vector<double>{1, 1, 2}));
}

TEST(Conv, IdentityKernelAndZeros) {
  Rng rng(3);
  const Tensor in = random_tensor({3, 20}, rng);
  Tensor eye({3, 3, 1});
  for (std::size_t c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  for (std::size_t d : {1, 4, 9}) EXPECT_EQ(dilated_causal_conv1d(in, eye, d).values, in.values);
  const Tensor w = random_tensor({2, 3, 3}, rng);
  const Tensor zero = dilated_causal_conv1d(Tensor({3, 20}), w, 2);
  for (double v : zero.values) EXPECT_EQ(v, 0.0);
}

TEST(Conv, MatchesLoopOracle) {
  Rng rng(11);
  for (std::size_t d : {1, 2, 5}) {
    const Tensor in = random_tensor({4, 30}, rng);
    const Tensor w = random_tensor({3, 4, 3}, rng);
    const Tensor out = dilated_causal_conv1d(in, w, d);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t t = 0; t < 30; ++t) {
        EXPECT_NEAR(out.at(c, t), conv_oracle(in, w, d, c, t), 1e-12);
      }
    }
  }
}

TEST(Conv, ChannelMismatchThrows) {
  EXPECT_THROW(dilated_causal_conv1d(Tensor({2, 5}), Tensor({1, 3, 2}), 1), ShapeError);
}

TEST(Conv, Linearity) {
  Rng rng(5);
  const Tensor x = random_tensor({3, 40}, rng), y = random_tensor({3, 40}, rng);
  const Tensor w = random_tensor({2, 3, 3}, rng);
  const double a = 1.7, b = -0.3;
  Tensor mix({3, 40});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const Tensor lhs = dilated_causal_conv1d(mix, w, 4);
  const Tensor cx = dilated_causal_conv1d(x, w, 4), cy = dilated_causal_conv1d(y, w, 4);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * cx[i] + b * cy[i], 1e-10);
}

TEST(Conv, Causality) {
  Rng rng(9);
  const Tensor w = random_tensor({2, 3, 3}, rng);
  const Tensor x = random_tensor({3, 50}, rng);
  const Tensor base = dilated_causal_conv1d(x, w, 8);
  for (std::size_t t : {0, 17, 49}) {
    Tensor p = x;
    p.at(1, t) += 3.0;
    const Tensor out = dilated_causal_conv1d(p, w, 8);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t s = 0; s < t; ++s) EXPECT_EQ(out.at(c, s), base.at(c, s));
    }
  }
}

TEST(Conv, BatchedLayerMatchesReference) {
  Rng rng(13);
  ParamStore params;
  CausalConv1d conv(params, "c", 3, 4, 3, 2, false);
  params.value(0) = random_tensor({4, 3, 3}, rng);
  const std::size_t steps = 25;
  std::vector<Tensor> windows{random_tensor({3, steps}, rng), random_tensor({3, steps}, rng)};
  Matrix x(3, 2 * steps);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < steps; ++t) x(c, b * steps + t) = windows[b].at(c, t);
  const Matrix y = conv.forward(params, x, steps);
  for (std::size_t b = 0; b < 2; ++b) {
    const Tensor ref = dilated_causal_conv1d(windows[b], params.value(0), 2);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t t = 0; t < steps; ++t) EXPECT_NEAR(y(c, b * steps + t), ref.at(c, t), 1e-12);
  }
}

TEST(LayerNorm, Examples) {
  const Tensor one({3}, {1, 1, 1}), zero({3});
  const Tensor c = layer_norm(Tensor({3}, {5, 5, 5}), one, zero);
  for (double v : c.values) EXPECT_EQ(v, 0.0);
  const Tensor n = layer_norm(Tensor({3}, {1, 2, 3}), one, zero, 0.0);
  const double z = 1.0 / std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(n[0], -z, 1e-12);
  EXPECT_NEAR(n[1], 0.0, 1e-12);
  EXPECT_NEAR(n[2], z, 1e-12);
  EXPECT_NEAR(z, 1.2247, 1e-4);
  const Tensor bias({3}, {0.5, -1, 2});
  EXPECT_EQ(layer_norm(Tensor({3}, {3, -7, 1}), zero, bias).values, bias.values);
}

TEST(LayerNorm, ZeroEpsSingleChannelThrows) {
  EXPECT_THROW(layer_norm(Tensor({1}, {2}), Tensor({1}, {1}), Tensor({1}), 0.0), ConfigError);
}

TEST(Selu, Values) {
  EXPECT_EQ(selu(0.0), 0.0);
  EXPECT_NEAR(selu(1.0), 1.0507009874, 1e-10);
  EXPECT_NEAR(selu(-1.0), -1.1113307, 1e-7);
  EXPECT_NEAR(selu(-1.0), kSeluLambda * kSeluAlpha * (std::exp(-1.0) - 1.0), 1e-15);
}

TEST(Dropout, IdentityCases) {
  Rng rng(1);
  const Tensor x = random_tensor({50}, rng);
  EXPECT_EQ(dropout(x, 0.5, rng, false).values, x.values);
  EXPECT_EQ(dropout(x, 0.0, rng, true).values, x.values);
  EXPECT_THROW(dropout(x, 1.0, rng, true), ConfigError);
}

TEST(Dropout, FractionAndScale) {
  Rng rng(2);
  const Tensor x({100000}, 1.0);
  const Tensor y = dropout(x, 0.2, rng, true);
  std::size_t zeros = 0;
  for (double v : y.values) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.25);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.2, 0.01);
}

TEST(Dropout, DeterministicMask) {
  const Tensor x({1000}, 1.0);
  Rng a(4), b(4);
  EXPECT_EQ(dropout(x, 0.3, a, true).values, dropout(x, 0.3, b, true).values);
}

TEST(Softmax, Examples) {
  const Tensor s = softmax(Tensor({2}, {0, 0}));
  EXPECT_EQ(s[0], 0.5);
  EXPECT_EQ(s[1], 0.5);
  const Tensor big = softmax(Tensor({2}, {1000, 0}));
  EXPECT_TRUE(big.is_finite());
  EXPECT_EQ(big[0], 1.0);
  bool clamped = false;
  EXPECT_NEAR(cross_entropy(big, 1, &clamped), -std::log(kProbFloor), 1e-9);
  EXPECT_TRUE(clamped);
  clamped = false;
  EXPECT_NEAR(cross_entropy(Tensor({2}, {1, 0}), 0, &clamped), 0.0, 1e-15);
  EXPECT_FALSE(clamped);
}

TEST(Softmax, NormalizedUpToLargeLogits) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    Tensor l({5});
    for (double& v : l.values) v = (rng.uniform() * 2 - 1) * 1e3;
    const Tensor p = softmax(l);
    EXPECT_NEAR(std::accumulate(p.values.begin(), p.values.end(), 0.0), 1.0, 1e-9);
    for (double v : p.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Backward, ScalarQuadratic) {
  double w = 1.3;
  const double g = central_difference([&] { return 0.5 * w * w; }, &w, 1e-5);
  EXPECT_NEAR(g, 1.3, 1e-9);
  EXPECT_EQ(w, 1.3);
}

TEST(Backward, DenseWeightGradIsOuterProduct) {
  ParamStore params;
  Dense layer(params, "fc", 3, 2);
  Matrix x(3, 1);
  x << 1.0, -2.0, 0.5;
  Matrix g(2, 1);
  g << 0.3, -1.1;
  params.zero_grad();
  layer.backward(params, x, g);
  const Tensor& dw = params.grad(params.find("fc.weight"));
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t n = 0; n < 3; ++n) EXPECT_DOUBLE_EQ(dw.at(m, n), g(m, 0) * x(n, 0));
  const Tensor& db = params.grad(params.find("fc.bias"));
  EXPECT_DOUBLE_EQ(db[0], 0.3);
  EXPECT_DOUBLE_EQ(db[1], -1.1);
}

TEST(Backward, BeforeForwardIsStateError) {
  Rng rng(1);
  TcnModel model = TcnModel::build(TcnConfig{}, rng);
  Matrix dlogits = Matrix::Zero(2, 1);
  EXPECT_THROW(model.backward(nullptr, dlogits), StateError);
}

TEST(Adam, FirstStep) {
  ParamStore params;
  params.add("w", {2});
  params.value(0) = Tensor({2}, {0.5, 0.5});
  params.grad(0) = Tensor({2}, {1.0, -1.0});
  AdamState state;
  adam_step(params, state);
  EXPECT_EQ(state.t, 1u);
  EXPECT_NEAR(params.value(0)[0] - 0.5, -0.002, 1e-10);
  EXPECT_NEAR(params.value(0)[1] - 0.5, 0.002, 1e-10);
  EXPECT_DOUBLE_EQ(params.value(0)[0] - 0.5, -(params.value(0)[1] - 0.5));
}

TEST(Adam, ZeroGradLeavesParams) {
  ParamStore params;
  params.add("w", {3});
  params.value(0) = Tensor({3}, {1, 2, 3});
  AdamState state;
  adam_step(params, state);
  EXPECT_EQ(params.value(0).values, (std::vector<double>{1, 2, 3}));
}

TEST(Adam, InconsistentStateThrows) {
  ParamStore params;
  params.add("w", {1});
  AdamState state;
  state.t = 3;
  EXPECT_THROW(adam_step(params, state), StateError);
}

TEST(HeInit, StdAndDeterminism) {
  Rng rng(21);
  const Tensor w = he_normal_init({1000000, 2}, rng);
  double ss = 0.0;
  for (double v : w.values) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(w.size())), 1.0, 0.01);
  Rng a(5), b(5), c(6);
  const auto ta = he_normal_init({8, 4, 3}, a), tb = he_normal_init({8, 4, 3}, b);
  EXPECT_EQ(ta.values, tb.values);
  EXPECT_NE(ta.values, he_normal_init({8, 4, 3}, c).values);
  EXPECT_EQ(fan_in({8, 4, 3}), 12u);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0, 1e-6), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9, 1e-6), 1e-3);
}

TEST(GradCheck, SuiteSmall) {
  GradCheckOptions o;
  o.configurations = 3;
  for (const auto& r : run_gradcheck_suite(o)) {
    EXPECT_TRUE(r.passed) << r.name << " max_rel_error " << r.max_rel_error;
    EXPECT_GT(r.coordinates, 0u) << r.name;
  }
}
