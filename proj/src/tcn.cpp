#include "bslip/tcn.hpp"

#include <algorithm>
#include <cmath>

#include "bslip/checkpoint.hpp"
#include "bslip/error.hpp"

namespace bslip {

using nn::Matrix;

std::size_t receptive_field(const TcnConfig& config) {
  std::size_t rf = 1;
  for (auto d : config.dilations) {
    rf += config.convs_per_block * (config.kernel_size - 1) * d;
  }
  return rf;
}

void validate(const TcnConfig& c) {
  if (c.input_channels < 1 || c.window_length < 1 || c.kernel_size < 1 ||
      c.convs_per_block < 1 || c.channels < 2 || c.num_classes < 2 ||
      c.fc_widths[0] < 1 || c.fc_widths[1] < 1) {
    throw ConfigError("TCN config has an empty dimension");
  }
  if (c.dilations.empty()) throw ConfigError("TCN config needs at least one block");
  for (std::size_t i = 0; i < c.dilations.size(); ++i) {
    if (c.dilations[i] < 1) throw ConfigError("dilations must be >= 1");
    if (i && c.dilations[i] <= c.dilations[i - 1]) {
      throw ConfigError("dilations must be strictly increasing");
    }
  }
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  const std::size_t rf = receptive_field(c);
  if (rf < c.window_length) {
    throw ConfigError("receptive field " + std::to_string(rf) +
                      " is shorter than the window length " +
                      std::to_string(c.window_length));
  }
}

std::vector<std::uint32_t> encode_config(const TcnConfig& c) {
  auto u = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  std::vector<std::uint32_t> f{
      u(c.input_channels), u(c.window_length), u(c.kernel_size),
      u(c.convs_per_block), u(c.channels),
      static_cast<std::uint32_t>(std::llround(c.dropout_rate * 1e6)),
      u(c.fc_widths[0]), u(c.fc_widths[1]), u(c.num_classes),
      u(c.dilations.size())};
  for (auto d : c.dilations) f.push_back(u(d));
  return f;
}

TcnConfig decode_tcn_config(const std::vector<std::uint32_t>& f) {
  using Code = CheckpointError::Code;
  if (f.size() < 10 || f.size() < 10 + static_cast<std::size_t>(f[9])) {
    throw CheckpointError(Code::Corrupt, "checkpoint config block is too short");
  }
  TcnConfig c;
  c.input_channels = f[0];
  c.window_length = f[1];
  c.kernel_size = f[2];
  c.convs_per_block = f[3];
  c.channels = f[4];
  c.dropout_rate = static_cast<double>(f[5]) / 1e6;
  c.fc_widths = {f[6], f[7]};
  c.num_classes = f[8];
  c.dilations.assign(f.begin() + 10, f.begin() + 10 + f[9]);
  return c;
}

// --- construction ------------------------------------------------------------------

TcnModel::TcnModel(TcnConfig config) : config_(std::move(config)) {
  validate(config_);
  std::size_t in = config_.input_channels;
  for (std::size_t b = 0; b < config_.dilations.size(); ++b) {
    Block block;
    const std::string prefix = "block" + std::to_string(b);
    std::size_t conv_in = in;
    for (std::size_t l = 0; l < config_.convs_per_block; ++l) {
      const std::string name = prefix + ".conv" + std::to_string(l);
      // No conv bias: the layer norm that follows removes it.
      block.convs.emplace_back(params_, name, conv_in, config_.channels,
                               config_.kernel_size, config_.dilations[b], false);
      block.norms.emplace_back(params_, prefix + ".norm" + std::to_string(l),
                               config_.channels);
      conv_in = config_.channels;
    }
    if (in != config_.channels) {
      block.projection.emplace(params_, prefix + ".skip", in, config_.channels, 1, 1, true);
    }
    blocks_.push_back(std::move(block));
    in = config_.channels;
  }
  last_step_plan_ = make_plan(false);
  full_plan_ = make_plan(true);
  fc1_ = nn::Dense(params_, "fc1", config_.channels, config_.fc_widths[0]);
  fc2_ = nn::Dense(params_, "fc2", config_.fc_widths[0], config_.fc_widths[1]);
  out_ = nn::Dense(params_, "out", config_.fc_widths[1], config_.num_classes);
}

TcnModel TcnModel::build(const TcnConfig& config, Rng& rng) {
  TcnModel m(config);
  const Rng init = rng.derive({0x696e6974ULL});
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    const std::string& name = m.params_.name(i);
    if (name.ends_with(".weight")) {
      Rng r = init.derive({i});
      m.params_.value(i) = nn::he_normal_init(m.params_.value(i).shape, r);
    }
  }
  return m;
}

// --- step plans ----------------------------------------------------------------------

namespace {

std::vector<std::size_t> expand(const std::vector<std::size_t>& out,
                                std::size_t k, std::size_t dilation) {
  std::vector<std::size_t> in;
  for (auto t : out)
    for (std::size_t j = 0; j < k; ++j)
      if (j * dilation <= t) in.push_back(t - j * dilation);
  std::sort(in.begin(), in.end());
  in.erase(std::unique(in.begin(), in.end()), in.end());
  return in;
}

std::vector<std::size_t> merge(std::vector<std::size_t> a,
                               const std::vector<std::size_t>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

std::vector<std::ptrdiff_t> positions(const std::vector<std::size_t>& from,
                                      const std::vector<std::size_t>& to) {
  std::vector<std::ptrdiff_t> pos;
  pos.reserve(to.size());
  for (auto t : to) {
    pos.push_back(std::lower_bound(from.begin(), from.end(), t) - from.begin());
  }
  return pos;
}

}  // namespace

TcnModel::StepPlan TcnModel::make_plan(bool all_steps) const {
  const std::size_t steps = config_.window_length;
  const std::size_t k = config_.kernel_size;
  const std::size_t n_convs = config_.convs_per_block;
  std::vector<std::size_t> all(steps);
  for (std::size_t t = 0; t < steps; ++t) all[t] = t;

  StepPlan plan;
  plan.blocks.resize(blocks_.size());
  std::vector<std::size_t> needed = all_steps ? all : std::vector<std::size_t>{steps - 1};
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    BlockPlan& bp = plan.blocks[b];
    const std::size_t d = config_.dilations[b];
    bp.out_steps = needed;
    // sets[l] = steps kept at the input of conv l; sets[n_convs] = block output.
    std::vector<std::vector<std::size_t>> sets(n_convs + 1);
    sets[n_convs] = needed;
    for (std::size_t l = n_convs; l-- > 1;) sets[l] = expand(sets[l + 1], k, d);
    sets[0] = merge(expand(sets[1], k, d), needed);
    if (all_steps) std::fill(sets.begin(), sets.end(), all);
    bp.in_steps = sets[0];
    for (std::size_t l = 0; l < n_convs; ++l) {
      bp.convs.push_back(all_steps ? nn::ConvRouting::all_steps(steps, k, d)
                                   : nn::ConvRouting::between(sets[l], sets[l + 1], k, d));
    }
    bp.skip = positions(bp.in_steps, bp.out_steps);
    bp.skip_identity = bp.in_steps == bp.out_steps;
    needed = bp.in_steps;
  }
  plan.input = positions(all, needed);
  plan.input_identity = needed == all;
  return plan;
}

// --- forward -------------------------------------------------------------------------

struct ConvStepCache {
  Matrix input, pre_norm, pre_act, mask;
};
struct BlockCache {
  Matrix input, sum;
  std::vector<ConvStepCache> steps;
};
struct TcnCache final : ForwardCache {
  bool all_steps = false;
  std::size_t samples = 0;
  std::vector<BlockCache> blocks;
  Matrix features, fc1_pre, mask1, fc2_in, fc2_pre, mask2, out_in;
};

Matrix TcnModel::trunk(const Matrix& x, const StepPlan& plan, bool training,
                       Rng* rng, TcnCache* cache) const {
  Matrix h = plan.input_identity
                 ? x
                 : nn::gather_columns(x, config_.window_length, plan.input);
  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    const Block& block = blocks_[bi];
    const BlockPlan& bp = plan.blocks[bi];
    BlockCache* bc = nullptr;
    if (cache) {
      bc = &cache->blocks.emplace_back();
      bc->input = h;
    }
    Matrix y = h;
    for (std::size_t l = 0; l < block.convs.size(); ++l) {
      Matrix c = block.convs[l].forward(params_, y, bp.convs[l]);
      Matrix n = block.norms[l].forward(params_, c);
      Matrix a = nn::selu(n);
      Matrix mask;
      if (training) a = nn::dropout_forward(a, config_.dropout_rate, *rng, mask);
      if (bc) bc->steps.push_back({std::move(y), std::move(c), std::move(n), std::move(mask)});
      y = std::move(a);
    }
    Matrix s = bp.skip_identity ? h : nn::gather_columns(h, bp.in_steps.size(), bp.skip);
    if (block.projection) s = block.projection->forward(params_, s, bp.out_steps.size());
    s += y;
    h = nn::selu(s);
    if (bc) bc->sum = std::move(s);
  }
  return h;
}

Matrix TcnModel::head(const Matrix& features, bool training, Rng* rng,
                      TcnCache* cache) const {
  Matrix z1 = fc1_.forward(params_, features);
  Matrix a1 = nn::selu(z1);
  Matrix m1, m2;
  if (training) a1 = nn::dropout_forward(a1, config_.dropout_rate, *rng, m1);
  Matrix z2 = fc2_.forward(params_, a1);
  Matrix a2 = nn::selu(z2);
  if (training) a2 = nn::dropout_forward(a2, config_.dropout_rate, *rng, m2);
  Matrix logits = out_.forward(params_, a2);
  if (cache) {
    cache->features = features;
    cache->fc1_pre = std::move(z1);
    cache->mask1 = std::move(m1);
    cache->fc2_in = std::move(a1);
    cache->fc2_pre = std::move(z2);
    cache->mask2 = std::move(m2);
    cache->out_in = std::move(a2);
  }
  return logits;
}

Matrix TcnModel::run(std::span<const nn::Tensor> windows, bool training, Rng* rng,
                     std::unique_ptr<ForwardCache>* cache, bool all_steps) const {
  if (training && !rng) throw StateError("training-mode forward needs an rng");
  for (const auto& w : windows) {
    if (w.rank() != 2 || w.dim(0) != config_.input_channels ||
        w.dim(1) != config_.window_length) {
      throw ShapeError("TCN input must be " +
                       nn::shape_string({config_.input_channels, config_.window_length}) +
                       ", got " + nn::shape_string(w.shape));
    }
  }
  const StepPlan& plan = all_steps ? full_plan_ : last_step_plan_;
  std::unique_ptr<TcnCache> c;
  if (cache) {
    c = std::make_unique<TcnCache>();
    c->all_steps = all_steps;
    c->samples = windows.size();
  }
  const Matrix h = trunk(stack_windows(windows), plan, training, rng, c.get());
  const std::size_t kept = plan.blocks.back().out_steps.size();
  Matrix logits = head(kept == 1 ? h : nn::last_steps(h, kept), training, rng, c.get());
  if (cache) *cache = std::move(c);
  return logits;
}

Matrix TcnModel::forward(std::span<const nn::Tensor> windows, bool training,
                         Rng* rng, std::unique_ptr<ForwardCache>* cache) const {
  return run(windows, training, rng, cache, false);
}

Matrix TcnModel::forward_full(std::span<const nn::Tensor> windows, bool training,
                              Rng* rng, std::unique_ptr<ForwardCache>* cache) const {
  return run(windows, training, rng, cache, true);
}

nn::Tensor TcnModel::forward_window(const nn::Tensor& window, bool training,
                                    Rng* rng) const {
  const Matrix logits = forward(std::span(&window, 1), training, rng, nullptr);
  const Matrix p = nn::softmax_columns(logits);
  nn::Tensor out({config_.num_classes});
  for (std::size_t i = 0; i < config_.num_classes; ++i) out[i] = p(static_cast<Eigen::Index>(i), 0);
  return out;
}

Matrix TcnModel::forward_all_steps(const nn::Tensor& window) const {
  if (window.rank() != 2 || window.dim(0) != config_.input_channels ||
      window.dim(1) != config_.window_length) {
    throw ShapeError("TCN input must be " +
                     nn::shape_string({config_.input_channels, config_.window_length}));
  }
  const Matrix h = trunk(stack_windows(std::span(&window, 1)), full_plan_, false,
                         nullptr, nullptr);
  return nn::softmax_columns(head(h, false, nullptr, nullptr));
}

// --- backward ------------------------------------------------------------------------

Matrix TcnModel::backward_impl(const ForwardCache* base, const Matrix& dlogits) {
  const auto* cache = dynamic_cast<const TcnCache*>(base);
  if (!cache || cache->blocks.size() != blocks_.size()) {
    throw StateError("TCN backward called without a matching training forward pass");
  }
  if (dlogits.cols() != cache->features.cols()) {
    throw ShapeError("dlogits batch does not match the cached forward pass");
  }
  const StepPlan& plan = cache->all_steps ? full_plan_ : last_step_plan_;

  Matrix d = out_.backward(params_, cache->out_in, dlogits);
  if (cache->mask2.size()) d.array() *= cache->mask2.array();
  d = nn::selu_backward(cache->fc2_pre, d);
  d = fc2_.backward(params_, cache->fc2_in, d);
  if (cache->mask1.size()) d.array() *= cache->mask1.array();
  d = nn::selu_backward(cache->fc1_pre, d);
  d = fc1_.backward(params_, cache->features, d);

  const std::size_t kept = plan.blocks.back().out_steps.size();
  Matrix dh = kept == 1 ? d : nn::last_steps_backward(d, kept);
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    const Block& block = blocks_[b];
    const BlockPlan& bp = plan.blocks[b];
    const BlockCache& bc = cache->blocks[b];
    const Matrix ds = nn::selu_backward(bc.sum, dh);
    Matrix dy = ds;
    for (std::size_t l = block.convs.size(); l-- > 0;) {
      const ConvStepCache& st = bc.steps[l];
      if (st.mask.size()) dy.array() *= st.mask.array();
      dy = nn::selu_backward(st.pre_act, dy);
      dy = block.norms[l].backward(params_, st.pre_norm, dy);
      dy = block.convs[l].backward(params_, st.input, dy, bp.convs[l]);
    }
    Matrix dskip = ds;
    if (block.projection) {
      const Matrix skip_in = bp.skip_identity
                                 ? bc.input
                                 : nn::gather_columns(bc.input, bp.in_steps.size(), bp.skip);
      dskip = block.projection->backward(params_, skip_in, ds, bp.out_steps.size());
    }
    if (bp.skip_identity) {
      dy += dskip;
    } else {
      nn::scatter_add_columns(dy, dskip, bp.in_steps.size(), bp.skip);
    }
    dh = std::move(dy);
  }
  if (plan.input_identity) return dh;
  Matrix dx = Matrix::Zero(dh.rows(),
                           static_cast<Eigen::Index>(cache->samples * config_.window_length));
  nn::scatter_add_columns(dx, dh, config_.window_length, plan.input);
  return dx;
}

void TcnModel::backward(const ForwardCache* cache, const Matrix& dlogits) {
  backward_impl(cache, dlogits);
}

Matrix TcnModel::input_gradient(const ForwardCache* cache, const Matrix& dlogits) {
  return backward_impl(cache, dlogits);
}

// --- persistence ---------------------------------------------------------------------

void TcnModel::save(const std::filesystem::path& path) const {
  auto fields = encode_config(config_);
  fields.push_back(trained ? 1u : 0u);
  write_checkpoint(path, kTcnMagic, fields, params_, norm);
}

TcnModel TcnModel::load(const std::filesystem::path& path,
                        const std::optional<TcnConfig>& expected) {
  using Code = CheckpointError::Code;
  const CheckpointData data = read_checkpoint(path, kTcnMagic);
  const TcnConfig config = decode_tcn_config(data.fields);
  const std::size_t config_len = 10 + config.dilations.size();
  if (data.fields.size() != config_len + 1) {
    throw CheckpointError(Code::Corrupt, "unexpected checkpoint config length");
  }
  if (expected && !(*expected == config)) {
    throw CheckpointError(Code::ShapeMismatch,
                          "checkpoint config does not match the expected TCN config");
  }
  TcnModel m = [&] {
    try {
      return TcnModel(config);
    } catch (const ConfigError& e) {
      throw CheckpointError(Code::Corrupt, std::string("checkpoint config: ") + e.what());
    }
  }();
  assign_tensors(m.params_, data);
  m.norm = data.norm;
  m.trained = data.fields.back() != 0;
  return m;
}

}  // namespace bslip
