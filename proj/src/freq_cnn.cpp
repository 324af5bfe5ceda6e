#include "bslip/freq_cnn.hpp"

#include <cmath>

#include "bslip/checkpoint.hpp"
#include "bslip/error.hpp"

namespace bslip::baseline {

using nn::Matrix;

void validate(const FreqCnnConfig& c) {
  if (c.input_channels < 1 || c.dft_length < 4 || c.kernel_size < 1 ||
      c.fc_width < 1 || c.num_classes < 2 || c.conv_channels.empty()) {
    throw ConfigError("frequency CNN config has an empty dimension");
  }
  for (auto w : c.conv_channels) {
    if (w < 2) throw ConfigError("frequency CNN conv layers need at least 2 channels");
  }
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
}

std::vector<std::uint32_t> encode_config(const FreqCnnConfig& c) {
  auto u = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  std::vector<std::uint32_t> f{
      u(c.input_channels), u(c.dft_length), u(c.kernel_size), u(c.fc_width),
      static_cast<std::uint32_t>(std::llround(c.dropout_rate * 1e6)),
      u(c.num_classes), u(c.conv_channels.size())};
  for (auto w : c.conv_channels) f.push_back(u(w));
  return f;
}

FreqCnnConfig decode_freq_cnn_config(const std::vector<std::uint32_t>& f) {
  using Code = CheckpointError::Code;
  if (f.size() < 7 || f.size() < 7 + static_cast<std::size_t>(f[6])) {
    throw CheckpointError(Code::Corrupt, "checkpoint config block is too short");
  }
  FreqCnnConfig c;
  c.input_channels = f[0];
  c.dft_length = f[1];
  c.kernel_size = f[2];
  c.fc_width = f[3];
  c.dropout_rate = static_cast<double>(f[4]) / 1e6;
  c.num_classes = f[5];
  c.conv_channels.assign(f.begin() + 7, f.begin() + 7 + f[6]);
  return c;
}

FreqCnn::FreqCnn(FreqCnnConfig config) : config_(std::move(config)) {
  validate(config_);
  bins_ = freq_bins({config_.dft_length});
  std::size_t in = config_.input_channels;
  for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
    const std::string name = "conv" + std::to_string(l);
    convs_.emplace_back(params_, name, in, config_.conv_channels[l],
                        config_.kernel_size, 1, false);
    norms_.emplace_back(params_, "norm" + std::to_string(l), config_.conv_channels[l]);
    in = config_.conv_channels[l];
  }
  fc_ = nn::Dense(params_, "fc", in * bins_, config_.fc_width);
  out_ = nn::Dense(params_, "out", config_.fc_width, config_.num_classes);
}

FreqCnn FreqCnn::build(const FreqCnnConfig& config, Rng& rng) {
  FreqCnn m(config);
  const Rng init = rng.derive({0x66636e6eULL});
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    if (m.params_.name(i).ends_with(".weight")) {
      Rng r = init.derive({i});
      m.params_.value(i) = nn::he_normal_init(m.params_.value(i).shape, r);
    }
  }
  return m;
}

namespace {

struct LayerCache {
  Matrix input, pre_norm, pre_act, mask;
};

struct FreqCnnCache final : ForwardCache {
  std::vector<LayerCache> layers;
  Matrix flat, fc_pre, fc_mask, out_in;
};

}  // namespace

Matrix FreqCnn::forward(std::span<const nn::Tensor> windows, bool training, Rng* rng,
                        std::unique_ptr<ForwardCache>* cache) const {
  const FreqImageConfig fic{config_.dft_length};
  Matrix images(static_cast<Eigen::Index>(config_.input_channels),
                static_cast<Eigen::Index>(windows.size() * bins_));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = windows[b];
    if (w.rank() != 2 || w.dim(0) != config_.input_channels) {
      throw ShapeError("frequency CNN input must have " +
                       std::to_string(config_.input_channels) + " channels, got " +
                       nn::shape_string(w.shape));
    }
    const nn::Tensor img = freq_image(w, fic);
    for (std::size_t c = 0; c < config_.input_channels; ++c) {
      for (std::size_t k = 0; k < bins_; ++k) {
        images(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b * bins_ + k)) =
            img.at(c, k);
      }
    }
  }
  return forward_images(images, training, rng, cache);
}

Matrix FreqCnn::forward_images(const Matrix& images, bool training, Rng* rng,
                               std::unique_ptr<ForwardCache>* cache) const {
  if (training && !rng) throw StateError("training-mode forward needs an rng");
  if (images.rows() != static_cast<Eigen::Index>(config_.input_channels) ||
      images.cols() % static_cast<Eigen::Index>(bins_) != 0) {
    throw ShapeError("frequency images have the wrong shape");
  }
  std::unique_ptr<FreqCnnCache> c;
  if (cache) c = std::make_unique<FreqCnnCache>();

  Matrix h = images;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    Matrix z = convs_[l].forward(params_, h, bins_);
    Matrix n = norms_[l].forward(params_, z);
    Matrix a = nn::selu(n);
    Matrix mask;
    if (training) a = nn::dropout_forward(a, config_.dropout_rate, *rng, mask);
    if (c) c->layers.push_back({std::move(h), std::move(z), std::move(n), std::move(mask)});
    h = std::move(a);
  }
  Matrix flat = nn::flatten_steps(h, bins_);
  Matrix z = fc_.forward(params_, flat);
  Matrix a = nn::selu(z);
  Matrix mask;
  if (training) a = nn::dropout_forward(a, config_.dropout_rate, *rng, mask);
  Matrix logits = out_.forward(params_, a);
  if (c) {
    c->flat = std::move(flat);
    c->fc_pre = std::move(z);
    c->fc_mask = std::move(mask);
    c->out_in = std::move(a);
    *cache = std::move(c);
  }
  return logits;
}

Matrix FreqCnn::backward_impl(const ForwardCache* base, const Matrix& dlogits) {
  const auto* c = dynamic_cast<const FreqCnnCache*>(base);
  if (!c || c->layers.size() != convs_.size()) {
    throw StateError("frequency CNN backward called without a matching training forward pass");
  }
  if (dlogits.cols() != c->out_in.cols()) {
    throw ShapeError("dlogits batch does not match the cached forward pass");
  }
  Matrix d = out_.backward(params_, c->out_in, dlogits);
  if (c->fc_mask.size()) d.array() *= c->fc_mask.array();
  d = nn::selu_backward(c->fc_pre, d);
  d = fc_.backward(params_, c->flat, d);
  d = nn::flatten_steps_backward(d, convs_.back().out_channels(), bins_);
  for (std::size_t l = convs_.size(); l-- > 0;) {
    const LayerCache& lc = c->layers[l];
    if (lc.mask.size()) d.array() *= lc.mask.array();
    d = nn::selu_backward(lc.pre_act, d);
    d = norms_[l].backward(params_, lc.pre_norm, d);
    d = convs_[l].backward(params_, lc.input, d, bins_);
  }
  return d;
}

void FreqCnn::backward(const ForwardCache* cache, const Matrix& dlogits) {
  backward_impl(cache, dlogits);
}

Matrix FreqCnn::input_gradient(const ForwardCache* cache, const Matrix& dlogits) {
  return backward_impl(cache, dlogits);
}

void FreqCnn::save(const std::filesystem::path& path) const {
  auto fields = encode_config(config_);
  fields.push_back(trained ? 1u : 0u);
  write_checkpoint(path, kFreqCnnMagic, fields, params_, norm);
}

FreqCnn FreqCnn::load(const std::filesystem::path& path,
                      const std::optional<FreqCnnConfig>& expected) {
  using Code = CheckpointError::Code;
  const CheckpointData data = read_checkpoint(path, kFreqCnnMagic);
  const FreqCnnConfig config = decode_freq_cnn_config(data.fields);
  if (data.fields.size() != 7 + config.conv_channels.size() + 1) {
    throw CheckpointError(Code::Corrupt, "unexpected checkpoint config length");
  }
  if (expected && !(*expected == config)) {
    throw CheckpointError(Code::ShapeMismatch,
                          "checkpoint config does not match the expected frequency CNN config");
  }
  FreqCnn m = [&] {
    try {
      return FreqCnn(config);
    } catch (const ConfigError& e) {
      throw CheckpointError(Code::Corrupt, std::string("checkpoint config: ") + e.what());
    }
  }();
  assign_tensors(m.params_, data);
  m.norm = data.norm;
  m.trained = data.fields.back() != 0;
  return m;
}

}  // namespace bslip::baseline
