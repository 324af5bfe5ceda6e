#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "bslip/classifier.hpp"
#include "bslip/layers.hpp"

namespace bslip {

inline constexpr std::string_view kTcnMagic = "BSLP";

struct TcnConfig {
  std::size_t input_channels = kTaxels;
  std::size_t window_length = kWindowLength;
  std::vector<std::size_t> dilations{1, 2, 4, 8, 16};
  std::size_t kernel_size = 3;
  std::size_t convs_per_block = 2;
  std::size_t channels = 32;
  double dropout_rate = 0.2;
  std::array<std::size_t, 2> fc_widths{64, 32};
  std::size_t num_classes = 2;

  bool operator==(const TcnConfig&) const = default;
};

/// 1 + sum over every conv layer of (k - 1) * dilation.
std::size_t receptive_field(const TcnConfig& config);

/// Throws ConfigError (naming the receptive field when it is the problem).
void validate(const TcnConfig& config);

std::vector<std::uint32_t> encode_config(const TcnConfig& config);
TcnConfig decode_tcn_config(const std::vector<std::uint32_t>& fields);

/// Stacked residual blocks of dilated causal convolutions
/// (conv -> layer norm -> SELU -> dropout, per conv) with a 1x1 projection on
/// the skip path when channel counts differ and SELU after the sum. The final
/// step's features feed two SELU fully connected layers and a softmax head.
class TcnModel final : public Classifier {
 public:
  static TcnModel build(const TcnConfig& config, Rng& rng);

  const TcnConfig& config() const { return config_; }
  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const override { return params_; }

  /// Computes only the time steps the final-step head depends on.
  nn::Matrix forward(std::span<const nn::Tensor> windows, bool training, Rng* rng,
                     std::unique_ptr<ForwardCache>* cache) const override;
  /// Same network evaluated at every time step of every layer. Agrees with
  /// forward() up to floating-point summation order.
  nn::Matrix forward_full(std::span<const nn::Tensor> windows, bool training,
                          Rng* rng, std::unique_ptr<ForwardCache>* cache) const;
  void backward(const ForwardCache* cache, const nn::Matrix& dlogits) override;
  nn::Matrix input_gradient(const ForwardCache* cache,
                            const nn::Matrix& dlogits) override;

  /// Probabilities for one [6 x T] window; `training` enables dropout.
  nn::Tensor forward_window(const nn::Tensor& window, bool training = false,
                            Rng* rng = nullptr) const;

  /// Head applied at every step of the final block output, inference mode:
  /// [classes x T] probabilities. Column t depends only on input steps <= t.
  nn::Matrix forward_all_steps(const nn::Tensor& window) const;

  void save(const std::filesystem::path& path) const;
  /// Rejects a checkpoint whose embedded config differs from `expected`.
  static TcnModel load(const std::filesystem::path& path,
                       const std::optional<TcnConfig>& expected = std::nullopt);

 private:
  struct Block {
    std::vector<nn::CausalConv1d> convs;
    std::vector<nn::LayerNorm> norms;
    std::optional<nn::CausalConv1d> projection;
  };

  /// Kept time steps per block. Activations inside block b hold
  /// blocks[b].in_steps on entry and blocks[b].out_steps on exit.
  struct BlockPlan {
    std::vector<std::size_t> in_steps, out_steps;
    std::vector<nn::ConvRouting> convs;
    std::vector<std::ptrdiff_t> skip;  // in position feeding each out step
    bool skip_identity = false;
  };
  struct StepPlan {
    std::vector<std::ptrdiff_t> input;  // window step feeding each kept input
    bool input_identity = false;
    std::vector<BlockPlan> blocks;
  };

  explicit TcnModel(TcnConfig config);
  StepPlan make_plan(bool all_steps) const;
  nn::Matrix run(std::span<const nn::Tensor> windows, bool training, Rng* rng,
                 std::unique_ptr<ForwardCache>* cache, bool all_steps) const;
  nn::Matrix trunk(const nn::Matrix& x, const StepPlan& plan, bool training,
                   Rng* rng, struct TcnCache* cache) const;
  nn::Matrix head(const nn::Matrix& features, bool training, Rng* rng,
                  struct TcnCache* cache) const;
  nn::Matrix backward_impl(const ForwardCache* cache, const nn::Matrix& dlogits);

  TcnConfig config_;
  nn::ParamStore params_;
  std::vector<Block> blocks_;
  StepPlan last_step_plan_, full_plan_;
  nn::Dense fc1_, fc2_, out_;
};

}  // namespace bslip
