#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bslip/rng.hpp"
#include "bslip/tensor.hpp"

namespace bslip::nn {

inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kProbFloor = 1e-12;

// ---------------------------------------------------------------------------
// Single-sample reference forms. These are the small, directly testable
// versions of each op; the batched layer classes below are what the models
// run.
// ---------------------------------------------------------------------------

/// Causal dilated convolution of input [C_in x T] with kernel
/// [C_out x C_in x k]. Tap j reads input step t - j*dilation (zero before 0):
///   out[c, t] = sum_i sum_j kernel[c, i, j] * in[i, t - j*dilation]
Tensor dilated_causal_conv1d(const Tensor& input, const Tensor& kernel,
                             std::size_t dilation);

/// Normalizes a feature vector to zero mean / unit population variance, then
/// applies gain and bias.
Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

double selu(double x);
double selu_grad(double x);

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training);

/// weights [M x N] times input [N] plus bias [M].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Max-subtracted softmax.
Tensor softmax(const Tensor& logits);

/// -log(probs[label]). When probs[label] is below kProbFloor it is clamped
/// and *clamped (if given) is set.
double cross_entropy(const Tensor& probs, std::size_t label,
                     bool* clamped = nullptr);

/// He-normal: N(0, sqrt(2 / fan_in)). fan_in is the product of all dims
/// after the first.
Tensor he_normal_init(const std::vector<std::size_t>& shape, Rng& rng);
std::size_t fan_in(const std::vector<std::size_t>& shape);

// ---------------------------------------------------------------------------
// Batched layers. Layers hold only parameter indices and hyperparameters;
// the caller keeps whatever the backward pass needs (normally the layer
// input), so a frozen model can be shared between threads.
// ---------------------------------------------------------------------------

/// Which input column feeds each output column, per kernel tap, when an
/// activation holds only some time steps of each sample. Column
/// b * count + i of an activation is the i-th kept step of sample b.
struct ConvRouting {
  std::size_t in_count = 0;
  std::size_t out_count = 0;
  /// taps[j][o]: input position read by tap j for output position o, or -1
  /// for causal zero padding.
  std::vector<std::vector<std::ptrdiff_t>> taps;
  /// Every step kept on both sides: the shifted-GEMM fast path applies.
  bool dense = false;

  /// Dense routing over all `steps` steps.
  static ConvRouting all_steps(std::size_t steps, std::size_t kernel_size,
                               std::size_t dilation);
  /// Routing from kept input steps to kept output steps. Every step read by
  /// an output must be among `in_steps`.
  static ConvRouting between(const std::vector<std::size_t>& in_steps,
                             const std::vector<std::size_t>& out_steps,
                             std::size_t kernel_size, std::size_t dilation);
};

/// Column gather/scatter for routed activations: out column (b, o) reads
/// x column (b, src[o]), or zero when src[o] < 0.
Matrix gather_columns(const Matrix& x, std::size_t in_count,
                      const std::vector<std::ptrdiff_t>& src);
void scatter_add_columns(Matrix& dx, const Matrix& g, std::size_t in_count,
                         const std::vector<std::ptrdiff_t>& src);

class CausalConv1d {
 public:
  CausalConv1d() = default;
  CausalConv1d(ParamStore& params, const std::string& name,
               std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel_size, std::size_t dilation, bool use_bias);

  /// x: [in_channels x samples*steps] -> [out_channels x samples*steps].
  Matrix forward(const ParamStore& params, const Matrix& x,
                 std::size_t steps) const;
  /// Accumulates parameter gradients and returns d(loss)/dx.
  Matrix backward(ParamStore& params, const Matrix& x, const Matrix& dy,
                  std::size_t steps) const;

  /// Routed forms: x holds routing.in_count steps per sample, the result
  /// routing.out_count.
  Matrix forward(const ParamStore& params, const Matrix& x,
                 const ConvRouting& routing) const;
  Matrix backward(ParamStore& params, const Matrix& x, const Matrix& dy,
                  const ConvRouting& routing) const;

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel_size() const { return k_; }
  std::size_t dilation() const { return dilation_; }
  std::size_t weight_index() const { return w_; }

 private:
  /// kernel[:, :, j] as an [out x in] matrix.
  Matrix tap_weights(const ParamStore& params, std::size_t j) const;
  void accumulate_tap_grad(ParamStore& params, std::size_t j,
                           const Matrix& dtap) const;
  Matrix forward_dense(const ParamStore& params, const Matrix& x,
                       std::size_t steps) const;
  Matrix backward_dense(ParamStore& params, const Matrix& x, const Matrix& dy,
                        std::size_t steps) const;

  std::size_t in_ = 0, out_ = 0, k_ = 1, dilation_ = 1;
  std::size_t w_ = 0, b_ = 0;
  bool bias_ = false;
};

/// Per-column (per time step) layer normalization over channels.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& params, const std::string& name, std::size_t channels,
            double eps = kLayerNormEps);

  Matrix forward(const ParamStore& params, const Matrix& x) const;
  Matrix backward(ParamStore& params, const Matrix& x, const Matrix& dy) const;

 private:
  std::size_t channels_ = 0, gain_ = 0, bias_ = 0;
  double eps_ = kLayerNormEps;
};

class Dense {
 public:
  Dense() = default;
  Dense(ParamStore& params, const std::string& name, std::size_t in_features,
        std::size_t out_features);

  /// x: [in x batch] -> [out x batch].
  Matrix forward(const ParamStore& params, const Matrix& x) const;
  Matrix backward(ParamStore& params, const Matrix& x, const Matrix& dy) const;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  std::size_t weight_index() const { return w_; }

 private:
  std::size_t in_ = 0, out_ = 0, w_ = 0, b_ = 0;
};

Matrix selu(const Matrix& x);
Matrix selu_backward(const Matrix& x, const Matrix& dy);

/// Fills `mask` with 0 or 1/(1-rate) and returns x .* mask.
Matrix dropout_forward(const Matrix& x, double rate, Rng& rng, Matrix& mask);

/// Last step of every sample: [C x samples*steps] -> [C x samples].
Matrix last_steps(const Matrix& x, std::size_t steps);
Matrix last_steps_backward(const Matrix& dy, std::size_t steps);

/// [C x samples*steps] -> [C*steps x samples], row index c*steps + t.
Matrix flatten_steps(const Matrix& x, std::size_t steps);
Matrix flatten_steps_backward(const Matrix& dy, std::size_t channels,
                              std::size_t steps);

struct LossResult {
  Matrix probs;      // [classes x batch]
  Matrix dlogits;    // d(mean loss)/d(logits)
  double mean_loss = 0.0;
  std::size_t correct = 0;
  std::size_t clamped = 0;
};

/// Softmax + mean cross-entropy over a batch of logits [classes x batch].
LossResult softmax_cross_entropy(const Matrix& logits,
                                 std::span<const int> labels);

/// Column-wise max-subtracted softmax.
Matrix softmax_columns(const Matrix& logits);

}  // namespace bslip::nn
