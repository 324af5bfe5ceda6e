#include "bslip/layers.hpp"

#include <algorithm>
#include <cmath>

#include "bslip/error.hpp"

namespace bslip::nn {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  t.check();
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_string(t.shape));
  }
}

}  // namespace

// --- single-sample forms ---------------------------------------------------

Tensor dilated_causal_conv1d(const Tensor& input, const Tensor& kernel,
                             std::size_t dilation) {
  require_rank(input, 2, "dilated_causal_conv1d input");
  require_rank(kernel, 3, "dilated_causal_conv1d kernel");
  if (dilation < 1) throw ConfigError("dilation must be >= 1");
  const std::size_t c_in = input.dim(0), steps = input.dim(1);
  const std::size_t c_out = kernel.dim(0), k = kernel.dim(2);
  if (k < 1) throw ConfigError("kernel size must be >= 1");
  if (kernel.dim(1) != c_in) {
    throw ShapeError("kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input has " + std::to_string(c_in));
  }
  Tensor out({c_out, steps});
  for (std::size_t c = 0; c < c_out; ++c) {
    for (std::size_t t = 0; t < steps; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t shift = j * dilation;
        if (shift > t) break;
        for (std::size_t i = 0; i < c_in; ++i) {
          acc += kernel[(c * c_in + i) * k + j] * input.at(i, t - shift);
        }
      }
      out.at(c, t) = acc;
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_rank(input, 1, "layer_norm input");
  const std::size_t n = input.size();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm gain/bias must match input length " +
                     std::to_string(n));
  }
  if (eps < 0.0) throw ConfigError("layer_norm eps must be >= 0");
  if (n == 1 && eps == 0.0) {
    throw ConfigError("layer_norm over a single channel needs eps > 0");
  }
  double mean = 0.0;
  for (double v : input.values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : input.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double denom = var + eps;
  const double inv = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = gain[i] * (input[i] - mean) * inv + bias[i];
  }
  return out;
}

double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

double selu_grad(double x) {
  return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0) return input;
  Tensor out = input;
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : out.values) v = rng.bernoulli(rate) ? 0.0 : v * scale;
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (input.size() != n || bias.size() != m) {
    throw ShapeError("dense: weights " + shape_string(weights.shape) +
                     " incompatible with input " + shape_string(input.shape) +
                     " / bias " + shape_string(bias.shape));
  }
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bias[r];
    for (std::size_t c = 0; c < n; ++c) acc += weights.at(r, c) * input[c];
    out[r] = acc;
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.size() == 0) throw ShapeError("softmax of empty tensor");
  const double mx = *std::max_element(logits.values.begin(), logits.values.end());
  Tensor out = logits;
  double sum = 0.0;
  for (double& v : out.values) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out.values) v /= sum;
  return out;
}

double cross_entropy(const Tensor& probs, std::size_t label, bool* clamped) {
  if (label >= probs.size()) {
    throw ShapeError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  double p = probs[label];
  const bool floor_hit = p < kProbFloor;
  if (clamped) *clamped = floor_hit;
  if (floor_hit) p = kProbFloor;
  return -std::log(p);
}

std::size_t fan_in(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return 1;
  std::size_t f = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) f *= shape[i];
  return shape.size() == 1 ? shape[0] : f;
}

Tensor he_normal_init(const std::vector<std::size_t>& shape, Rng& rng) {
  Tensor t(shape);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in(shape)));
  for (double& v : t.values) v = rng.normal(0.0, stddev);
  return t;
}

// --- CausalConv1d ------------------------------------------------------------

CausalConv1d::CausalConv1d(ParamStore& params, const std::string& name,
                           std::size_t in_channels, std::size_t out_channels,
                           std::size_t kernel_size, std::size_t dilation,
                           bool use_bias)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel_size),
      dilation_(dilation),
      bias_(use_bias) {
  if (k_ < 1 || dilation_ < 1 || in_ < 1 || out_ < 1) {
    throw ConfigError("conv " + name + ": sizes and dilation must be >= 1");
  }
  w_ = params.add(name + ".weight", {out_, in_, k_});
  if (bias_) b_ = params.add(name + ".bias", {out_});
}

Matrix CausalConv1d::tap_weights(const ParamStore& params, std::size_t j) const {
  const Tensor& w = params.value(w_);
  Matrix tap(out_, in_);
  for (std::size_t c = 0; c < out_; ++c)
    for (std::size_t i = 0; i < in_; ++i) tap(c, i) = w[(c * in_ + i) * k_ + j];
  return tap;
}

void CausalConv1d::accumulate_tap_grad(ParamStore& params, std::size_t j,
                                       const Matrix& dtap) const {
  Tensor& gw = params.grad(w_);
  for (std::size_t c = 0; c < out_; ++c)
    for (std::size_t i = 0; i < in_; ++i) gw[(c * in_ + i) * k_ + j] += dtap(c, i);
}

ConvRouting ConvRouting::all_steps(std::size_t steps, std::size_t kernel_size,
                                   std::size_t dilation) {
  std::vector<std::size_t> all(steps);
  for (std::size_t t = 0; t < steps; ++t) all[t] = t;
  ConvRouting r = between(all, all, kernel_size, dilation);
  r.dense = true;
  return r;
}

ConvRouting ConvRouting::between(const std::vector<std::size_t>& in_steps,
                                 const std::vector<std::size_t>& out_steps,
                                 std::size_t kernel_size, std::size_t dilation) {
  ConvRouting r;
  r.in_count = in_steps.size();
  r.out_count = out_steps.size();
  r.taps.assign(kernel_size, std::vector<std::ptrdiff_t>(out_steps.size(), -1));
  for (std::size_t j = 0; j < kernel_size; ++j) {
    const std::size_t shift = j * dilation;
    for (std::size_t o = 0; o < out_steps.size(); ++o) {
      if (out_steps[o] < shift) continue;
      const std::size_t want = out_steps[o] - shift;
      const auto it = std::lower_bound(in_steps.begin(), in_steps.end(), want);
      if (it == in_steps.end() || *it != want) {
        throw ConfigError("conv routing: step " + std::to_string(want) +
                          " is read but not kept");
      }
      r.taps[j][o] = it - in_steps.begin();
    }
  }
  r.dense = r.in_count == r.out_count && in_steps == out_steps &&
            (in_steps.empty() || in_steps.back() + 1 == in_steps.size());
  return r;
}

Matrix gather_columns(const Matrix& x, std::size_t in_count,
                      const std::vector<std::ptrdiff_t>& src) {
  const auto in = static_cast<Eigen::Index>(in_count);
  const auto out = static_cast<Eigen::Index>(src.size());
  const Eigen::Index samples = x.cols() / in;
  Matrix g(x.rows(), samples * out);
  for (Eigen::Index b = 0; b < samples; ++b) {
    for (Eigen::Index o = 0; o < out; ++o) {
      const auto s = src[static_cast<std::size_t>(o)];
      if (s >= 0) {
        g.col(b * out + o) = x.col(b * in + s);
      } else {
        g.col(b * out + o).setZero();
      }
    }
  }
  return g;
}

void scatter_add_columns(Matrix& dx, const Matrix& g, std::size_t in_count,
                         const std::vector<std::ptrdiff_t>& src) {
  const auto in = static_cast<Eigen::Index>(in_count);
  const auto out = static_cast<Eigen::Index>(src.size());
  const Eigen::Index samples = g.cols() / out;
  for (Eigen::Index b = 0; b < samples; ++b) {
    for (Eigen::Index o = 0; o < out; ++o) {
      const auto s = src[static_cast<std::size_t>(o)];
      if (s >= 0) dx.col(b * in + s) += g.col(b * out + o);
    }
  }
}

Matrix CausalConv1d::forward(const ParamStore& params, const Matrix& x,
                             std::size_t steps) const {
  if (static_cast<std::size_t>(x.rows()) != in_) {
    throw ShapeError("conv expects " + std::to_string(in_) +
                     " input channels, got " + std::to_string(x.rows()));
  }
  if (steps == 0 || x.cols() % static_cast<Eigen::Index>(steps) != 0) {
    throw ShapeError("conv input columns not a multiple of the step count");
  }
  return forward_dense(params, x, steps);
}

Matrix CausalConv1d::backward(ParamStore& params, const Matrix& x,
                              const Matrix& dy, std::size_t steps) const {
  return backward_dense(params, x, dy, steps);
}

Matrix CausalConv1d::forward(const ParamStore& params, const Matrix& x,
                             const ConvRouting& routing) const {
  if (static_cast<std::size_t>(x.rows()) != in_) {
    throw ShapeError("conv expects " + std::to_string(in_) +
                     " input channels, got " + std::to_string(x.rows()));
  }
  if (routing.taps.size() != k_ || routing.in_count == 0 ||
      x.cols() % static_cast<Eigen::Index>(routing.in_count) != 0) {
    throw ShapeError("conv routing does not match the layer or its input");
  }
  if (routing.dense) return forward_dense(params, x, routing.in_count);
  const Eigen::Index samples = x.cols() / static_cast<Eigen::Index>(routing.in_count);
  Matrix y = Matrix::Zero(out_, samples * static_cast<Eigen::Index>(routing.out_count));
  for (std::size_t j = 0; j < k_; ++j) {
    y.noalias() += tap_weights(params, j) * gather_columns(x, routing.in_count, routing.taps[j]);
  }
  if (bias_) {
    const Tensor& b = params.value(b_);
    y.colwise() += Eigen::Map<const Vector>(b.values.data(), out_);
  }
  return y;
}

Matrix CausalConv1d::backward(ParamStore& params, const Matrix& x,
                              const Matrix& dy, const ConvRouting& routing) const {
  if (routing.dense) return backward_dense(params, x, dy, routing.in_count);
  Matrix dx = Matrix::Zero(in_, x.cols());
  Matrix dtap(out_, in_);
  for (std::size_t j = 0; j < k_; ++j) {
    const Matrix g = gather_columns(x, routing.in_count, routing.taps[j]);
    dtap.noalias() = dy * g.transpose();
    accumulate_tap_grad(params, j, dtap);
    scatter_add_columns(dx, tap_weights(params, j).transpose() * dy,
                        routing.in_count, routing.taps[j]);
  }
  if (bias_) {
    Tensor& gb = params.grad(b_);
    const Vector db = dy.rowwise().sum();
    for (std::size_t c = 0; c < out_; ++c) gb[c] += db[c];
  }
  return dx;
}

// Each tap is one GEMM over all columns; its result is then added into the
// output shifted right by j*dilation within every sample. Columns that would
// read across a sample boundary are the causal zero padding and are skipped.
Matrix CausalConv1d::forward_dense(const ParamStore& params, const Matrix& x,
                                   std::size_t steps) const {
  const auto samples = static_cast<std::size_t>(x.cols()) / steps;
  Matrix y(out_, x.cols());
  y.noalias() = tap_weights(params, 0) * x;
  Matrix tap_out(out_, x.cols());
  for (std::size_t j = 1; j < k_; ++j) {
    const std::size_t shift = j * dilation_;
    if (shift >= steps) break;
    tap_out.noalias() = tap_weights(params, j) * x;
    const auto len = static_cast<Eigen::Index>(steps - shift);
    for (std::size_t b = 0; b < samples; ++b) {
      const auto base = static_cast<Eigen::Index>(b * steps);
      y.block(0, base + shift, out_, len) += tap_out.block(0, base, out_, len);
    }
  }
  if (bias_) {
    const Tensor& b = params.value(b_);
    y.colwise() += Eigen::Map<const Vector>(b.values.data(), out_);
  }
  return y;
}

Matrix CausalConv1d::backward_dense(ParamStore& params, const Matrix& x,
                                    const Matrix& dy, std::size_t steps) const {
  const auto samples = static_cast<std::size_t>(x.cols()) / steps;
  const auto n = x.cols();
  Matrix dx(in_, n);
  dx.noalias() = tap_weights(params, 0).transpose() * dy;
  Matrix dtap(out_, in_);
  dtap.noalias() = dy * x.transpose();
  accumulate_tap_grad(params, 0, dtap);

  Matrix masked, back(in_, n);
  for (std::size_t j = 1; j < k_; ++j) {
    const std::size_t shift = j * dilation_;
    if (shift >= steps) break;
    const auto s = static_cast<Eigen::Index>(shift);
    const auto len = static_cast<Eigen::Index>(steps - shift);
    // dy with each sample's first `shift` columns zeroed, so a global shift
    // pairs only columns from the same sample.
    masked = dy;
    for (std::size_t b = 0; b < samples; ++b) {
      masked.middleCols(static_cast<Eigen::Index>(b * steps), s).setZero();
    }
    dtap.noalias() = masked.rightCols(n - s) * x.leftCols(n - s).transpose();
    accumulate_tap_grad(params, j, dtap);
    back.noalias() = tap_weights(params, j).transpose() * dy;
    for (std::size_t b = 0; b < samples; ++b) {
      const auto base = static_cast<Eigen::Index>(b * steps);
      dx.block(0, base, in_, len) += back.block(0, base + s, in_, len);
    }
  }
  if (bias_) {
    Tensor& gb = params.grad(b_);
    const Vector db = dy.rowwise().sum();
    for (std::size_t c = 0; c < out_; ++c) gb[c] += db[c];
  }
  return dx;
}

// --- LayerNorm ---------------------------------------------------------------

LayerNorm::LayerNorm(ParamStore& params, const std::string& name,
                     std::size_t channels, double eps)
    : channels_(channels), eps_(eps) {
  if (channels_ < 2) throw ConfigError("layer norm needs at least 2 channels");
  if (eps_ <= 0.0) throw ConfigError("layer norm eps must be > 0");
  gain_ = params.add(name + ".gain", {channels_});
  bias_ = params.add(name + ".bias", {channels_});
  std::fill(params.value(gain_).values.begin(),
            params.value(gain_).values.end(), 1.0);
}

Matrix LayerNorm::forward(const ParamStore& params, const Matrix& x) const {
  const auto n = static_cast<double>(channels_);
  Eigen::Map<const Vector> g(params.value(gain_).values.data(), channels_);
  Eigen::Map<const Vector> b(params.value(bias_).values.data(), channels_);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + eps_);
    y.col(c) = ((x.col(c).array() - mean) * inv * g.array() + b.array()).matrix();
  }
  return y;
}

Matrix LayerNorm::backward(ParamStore& params, const Matrix& x,
                           const Matrix& dy) const {
  const auto n = static_cast<double>(channels_);
  Eigen::Map<const Vector> g(params.value(gain_).values.data(), channels_);
  Eigen::Map<Vector> dg(params.grad(gain_).values.data(), channels_);
  Eigen::Map<Vector> db(params.grad(bias_).values.data(), channels_);
  Matrix dx(x.rows(), x.cols());
  Vector xhat(channels_), dxhat(channels_);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + eps_);
    xhat = (x.col(c).array() - mean) * inv;
    dg.array() += dy.col(c).array() * xhat.array();
    db += dy.col(c);
    dxhat = (dy.col(c).array() * g.array()).matrix();
    const double m1 = dxhat.mean();
    const double m2 = dxhat.dot(xhat) / n;
    dx.col(c) = (inv * (dxhat.array() - m1 - xhat.array() * m2)).matrix();
  }
  return dx;
}

// --- Dense -------------------------------------------------------------------

Dense::Dense(ParamStore& params, const std::string& name,
             std::size_t in_features, std::size_t out_features)
    : in_(in_features), out_(out_features) {
  if (in_ < 1 || out_ < 1) throw ConfigError("dense " + name + ": empty layer");
  w_ = params.add(name + ".weight", {out_, in_});
  b_ = params.add(name + ".bias", {out_});
}

Matrix Dense::forward(const ParamStore& params, const Matrix& x) const {
  if (static_cast<std::size_t>(x.rows()) != in_) {
    throw ShapeError("dense expects " + std::to_string(in_) +
                     " features, got " + std::to_string(x.rows()));
  }
  // Owned copies: products over unaligned maps can change summation order
  // with the heap address, which breaks run-to-run reproducibility.
  const Matrix w = Eigen::Map<const RowMajorMatrix>(params.value(w_).values.data(), out_, in_);
  Eigen::Map<const Vector> b(params.value(b_).values.data(), out_);
  Matrix y(out_, x.cols());
  y.noalias() = w * x;
  y.colwise() += b;
  return y;
}

Matrix Dense::backward(ParamStore& params, const Matrix& x,
                       const Matrix& dy) const {
  const Matrix w = Eigen::Map<const RowMajorMatrix>(params.value(w_).values.data(), out_, in_);
  Eigen::Map<RowMajorMatrix> gw(params.grad(w_).values.data(), out_, in_);
  Eigen::Map<Vector> gb(params.grad(b_).values.data(), out_);
  const Matrix dw = dy * x.transpose();
  gw += dw;
  const Vector dbias = dy.rowwise().sum();
  gb += dbias;
  Matrix dx(in_, dy.cols());
  dx.noalias() = w.transpose() * dy;
  return dx;
}

// --- elementwise and reshaping -----------------------------------------------

// Branch-free forms so Eigen can vectorize exp.
Matrix selu(const Matrix& x) {
  const auto a = x.array();
  return (kSeluLambda * a.max(0.0) +
          kSeluLambda * kSeluAlpha * (a.min(0.0).exp() - 1.0))
      .matrix();
}

Matrix selu_backward(const Matrix& x, const Matrix& dy) {
  const Eigen::ArrayXXd neg = kSeluLambda * kSeluAlpha * x.array().min(0.0).exp();
  return (dy.array() * (x.array() > 0.0).select(kSeluLambda, neg)).matrix();
}

Matrix dropout_forward(const Matrix& x, double rate, Rng& rng, Matrix& mask) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " +
                      std::to_string(rate));
  }
  const double scale = 1.0 / (1.0 - rate);
  mask.resize(x.rows(), x.cols());
  double* m = mask.data();
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    m[i] = rng.bernoulli(rate) ? 0.0 : scale;
  }
  return (x.array() * mask.array()).matrix();
}

Matrix last_steps(const Matrix& x, std::size_t steps) {
  const auto samples = x.cols() / static_cast<Eigen::Index>(steps);
  Matrix y(x.rows(), samples);
  for (Eigen::Index b = 0; b < samples; ++b) {
    y.col(b) = x.col(b * static_cast<Eigen::Index>(steps) + steps - 1);
  }
  return y;
}

Matrix last_steps_backward(const Matrix& dy, std::size_t steps) {
  const auto t = static_cast<Eigen::Index>(steps);
  Matrix dx = Matrix::Zero(dy.rows(), dy.cols() * t);
  for (Eigen::Index b = 0; b < dy.cols(); ++b) dx.col(b * t + t - 1) = dy.col(b);
  return dx;
}

Matrix flatten_steps(const Matrix& x, std::size_t steps) {
  const auto t = static_cast<Eigen::Index>(steps);
  const Eigen::Index channels = x.rows(), samples = x.cols() / t;
  Matrix y(channels * t, samples);
  for (Eigen::Index b = 0; b < samples; ++b)
    for (Eigen::Index c = 0; c < channels; ++c)
      for (Eigen::Index s = 0; s < t; ++s) y(c * t + s, b) = x(c, b * t + s);
  return y;
}

Matrix flatten_steps_backward(const Matrix& dy, std::size_t channels,
                              std::size_t steps) {
  const auto t = static_cast<Eigen::Index>(steps);
  const auto ch = static_cast<Eigen::Index>(channels);
  Matrix dx(ch, dy.cols() * t);
  for (Eigen::Index b = 0; b < dy.cols(); ++b)
    for (Eigen::Index c = 0; c < ch; ++c)
      for (Eigen::Index s = 0; s < t; ++s) dx(c, b * t + s) = dy(c * t + s, b);
  return dx;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    p.col(c) = (logits.col(c).array() - mx).exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

LossResult softmax_cross_entropy(const Matrix& logits,
                                 std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.cols()) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(logits.cols()) + " logits");
  }
  LossResult r;
  r.probs = softmax_columns(logits);
  r.dlogits = r.probs;
  const double inv_batch = 1.0 / static_cast<double>(labels.size());
  double total = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(c)]);
    if (label < 0 || label >= logits.rows()) {
      throw ShapeError("label out of range: " + std::to_string(label));
    }
    double p = r.probs(label, c);
    if (p < kProbFloor) {
      p = kProbFloor;
      ++r.clamped;
    }
    total -= std::log(p);
    Eigen::Index arg = 0;
    r.probs.col(c).maxCoeff(&arg);
    if (arg == label) ++r.correct;
    r.dlogits(label, c) -= 1.0;
  }
  r.dlogits *= inv_batch;
  r.mean_loss = total * inv_batch;
  return r;
}

}  // namespace bslip::nn
