#include "bslip/classifier.hpp"

#include <cmath>
#include <sstream>

#include "bslip/error.hpp"
#include "bslip/layers.hpp"

namespace bslip {

nn::Matrix stack_windows(std::span<const nn::Tensor> windows) {
  if (windows.empty()) throw ShapeError("no windows to stack");
  const std::size_t channels = windows[0].dim(0), steps = windows[0].dim(1);
  nn::Matrix x(channels, windows.size() * steps);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const nn::Tensor& w = windows[b];
    if (w.rank() != 2 || w.dim(0) != channels || w.dim(1) != steps) {
      throw ShapeError("window " + std::to_string(b) + " has shape " +
                       nn::shape_string(w.shape) + ", expected " +
                       nn::shape_string({channels, steps}));
    }
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < steps; ++t)
        x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b * steps + t)) =
            w.at(c, t);
  }
  return x;
}

nn::Tensor Classifier::predict(const nn::Tensor& window) const {
  const nn::Matrix logits = forward(std::span(&window, 1), false, nullptr, nullptr);
  const nn::Matrix p = nn::softmax_columns(logits);
  nn::Tensor out({static_cast<std::size_t>(p.rows())});
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = p(i, 0);
  return out;
}

std::vector<nn::Tensor> Classifier::predict_each(
    std::span<const nn::Tensor> windows) const {
  std::vector<nn::Tensor> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(predict(w));
  return out;
}

namespace {

std::vector<int> labels_of(std::span<const LabeledWindow> windows,
                           std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(static_cast<int>(windows[i].label));
  return out;
}

std::string nonfinite_report(const nn::ParamStore& params, std::size_t epoch,
                             std::size_t batch, double loss) {
  std::ostringstream os;
  os << "non-finite loss " << loss << " at epoch " << epoch << ", batch " << batch;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.value(i).is_finite()) os << "; non-finite values in " << params.name(i);
    if (!params.grad(i).is_finite()) os << "; non-finite grads in " << params.name(i);
  }
  return os.str();
}

}  // namespace

LossAccuracy score(const Classifier& model, std::span<const LabeledWindow> windows,
                   std::size_t batch_size) {
  LossAccuracy r;
  if (windows.empty()) return r;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<nn::Tensor> xs;
  std::vector<int> labels;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    xs.clear();
    labels.clear();
    for (std::size_t i = start; i < end; ++i) {
      xs.push_back(windows[i].x);
      labels.push_back(static_cast<int>(windows[i].label));
    }
    const auto logits = model.forward(xs, false, nullptr, nullptr);
    const auto res = nn::softmax_cross_entropy(logits, labels);
    loss += res.mean_loss * static_cast<double>(end - start);
    correct += res.correct;
  }
  r.loss = loss / static_cast<double>(windows.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(windows.size());
  return r;
}

std::vector<Label> classify(const Classifier& model,
                            std::span<const LabeledWindow> windows) {
  std::vector<Label> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    const nn::Tensor p = model.predict(w.x);
    out.push_back(p[1] > p[0] ? Label::Slip : Label::Static);
  }
  return out;
}

std::vector<EpochMetrics> train(
    Classifier& model, const Dataset& data, const TrainSchedule& schedule,
    const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (schedule.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (schedule.lr < 0.0) throw ConfigError("learning rate must be >= 0");
  if (data.train.empty()) throw DataError("training split is empty");

  model.norm = data.stats;
  const Rng root = Rng(schedule.seed).derive({0x7472'6169'6eULL});
  nn::AdamState adam(nn::AdamConfig{.lr = schedule.lr});
  std::vector<EpochMetrics> history;
  std::vector<nn::Tensor> batch;
  std::unique_ptr<ForwardCache> cache;

  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    const Rng epoch_rng = root.derive({epoch});
    Rng sample_rng = epoch_rng.derive({1});
    Rng augment_rng = epoch_rng.derive({2});
    Rng dropout_rng = epoch_rng.derive({3});

    const auto order = undersample(data.train, sample_rng);
    std::size_t n_batches = (order.size() + schedule.batch_size - 1) / schedule.batch_size;
    if (schedule.max_batches) n_batches = std::min(n_batches, schedule.max_batches);

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      const std::size_t start = bi * schedule.batch_size;
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      batch.clear();
      for (auto i : idx) {
        batch.push_back(schedule.augment
                            ? augment(data.train[i], augment_rng, schedule.augmentation).x
                            : data.train[i].x);
      }
      const auto labels = labels_of(data.train, idx);

      model.params().zero_grad();
      const nn::Matrix logits = model.forward(batch, true, &dropout_rng, &cache);
      const auto res = nn::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(res.mean_loss)) {
        throw NumericError(nonfinite_report(model.params(), epoch, bi, res.mean_loss));
      }
      model.backward(cache.get(), res.dlogits);
      nn::adam_step(model.params(), adam);

      loss_sum += res.mean_loss * static_cast<double>(idx.size());
      correct += res.correct;
      seen += idx.size();
    }
    if (!model.params().all_finite()) {
      throw NumericError(nonfinite_report(model.params(), epoch, n_batches, loss_sum));
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    m.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    const auto val = score(model, data.val);
    m.val_loss = val.loss;
    m.val_accuracy = val.accuracy;
    history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  model.trained = true;
  return history;
}

}  // namespace bslip
