#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "bslip/classifier.hpp"
#include "bslip/layers.hpp"
#include "bslip/spectral.hpp"

namespace bslip::baseline {

inline constexpr std::string_view kFreqCnnMagic = "BSLF";

struct FreqCnnConfig {
  std::size_t input_channels = kTaxels;
  std::size_t dft_length = 100;
  std::vector<std::size_t> conv_channels{16, 16};
  std::size_t kernel_size = 3;
  std::size_t fc_width = 32;
  double dropout_rate = 0.2;
  std::size_t num_classes = 2;

  bool operator==(const FreqCnnConfig&) const = default;
};

void validate(const FreqCnnConfig& config);
std::vector<std::uint32_t> encode_config(const FreqCnnConfig& config);
FreqCnnConfig decode_freq_cnn_config(const std::vector<std::uint32_t>& fields);

/// Classifier on frequency images: taxels are the input channels of 1-D
/// convolutions along the frequency axis (conv -> layer norm -> SELU ->
/// dropout per layer), then flatten -> SELU fully connected -> softmax.
class FreqCnn final : public Classifier {
 public:
  static FreqCnn build(const FreqCnnConfig& config, Rng& rng);

  const FreqCnnConfig& config() const { return config_; }
  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const override { return params_; }

  /// Takes time-domain [6 x 100] windows and converts them to frequency
  /// images internally.
  nn::Matrix forward(std::span<const nn::Tensor> windows, bool training, Rng* rng,
                     std::unique_ptr<ForwardCache>* cache) const override;
  void backward(const ForwardCache* cache, const nn::Matrix& dlogits) override;
  /// Gradient with respect to the frequency images [channels x windows*bins]
  /// (the spectrum itself is not differentiated).
  nn::Matrix input_gradient(const ForwardCache* cache,
                            const nn::Matrix& dlogits) override;

  /// Forward pass on precomputed images [channels x windows*bins].
  nn::Matrix forward_images(const nn::Matrix& images, bool training, Rng* rng,
                            std::unique_ptr<ForwardCache>* cache) const;

  void save(const std::filesystem::path& path) const;
  static FreqCnn load(const std::filesystem::path& path,
                      const std::optional<FreqCnnConfig>& expected = std::nullopt);

 private:
  explicit FreqCnn(FreqCnnConfig config);
  nn::Matrix backward_impl(const ForwardCache* cache, const nn::Matrix& dlogits);

  FreqCnnConfig config_;
  std::size_t bins_ = 0;
  nn::ParamStore params_;
  std::vector<nn::CausalConv1d> convs_;
  std::vector<nn::LayerNorm> norms_;
  nn::Dense fc_, out_;
};

}  // namespace bslip::baseline
