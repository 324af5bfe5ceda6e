#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "bslip/adam.hpp"
#include "bslip/data.hpp"
#include "bslip/rng.hpp"
#include "bslip/tensor.hpp"

namespace bslip {

/// Whatever a model keeps from a training-mode forward pass for its backward
/// pass. Each model derives its own.
struct ForwardCache {
  virtual ~ForwardCache() = default;
};

/// A two-class window classifier trained with the shared recipe below. Input
/// windows are normalized [6 x 100] tensors.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual nn::ParamStore& params() = 0;
  virtual const nn::ParamStore& params() const = 0;

  /// Logits [classes x windows]. When `cache` is non-null the pass is
  /// recorded for backward(). `rng` drives dropout and is required when
  /// `training` is set.
  virtual nn::Matrix forward(std::span<const nn::Tensor> windows, bool training,
                             Rng* rng,
                             std::unique_ptr<ForwardCache>* cache) const = 0;

  /// Accumulates parameter gradients for d(loss)/d(logits) = `dlogits`.
  /// Throws StateError when `cache` is not from this model's forward().
  virtual void backward(const ForwardCache* cache, const nn::Matrix& dlogits) = 0;

  /// Gradient with respect to the input windows, laid out like the input
  /// matrix [6 x windows*steps]. Used by gradient checks.
  virtual nn::Matrix input_gradient(const ForwardCache* cache,
                                    const nn::Matrix& dlogits) = 0;

  /// Class probabilities for one window, inference mode.
  nn::Tensor predict(const nn::Tensor& window) const;

  /// One window at a time, so results are independent of batching.
  std::vector<nn::Tensor> predict_each(std::span<const nn::Tensor> windows) const;

  bool trained = false;
  NormStats norm;
};

/// Stacks [6 x T] windows into a [6 x windows*T] activation matrix.
nn::Matrix stack_windows(std::span<const nn::Tensor> windows);

struct TrainSchedule {
  std::size_t epochs = 60;
  std::size_t batch_size = 256;
  double lr = 0.002;
  std::uint64_t seed = 1;
  bool augment = true;
  AugmentConfig augmentation;
  /// Batches per epoch cap; 0 means the full balanced epoch.
  std::size_t max_batches = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// Per epoch: undersample, shuffle, augment plus input noise, Adam on
/// mini-batches of mean cross-entropy, then score the validation split.
/// Deterministic for a given schedule seed.
std::vector<EpochMetrics> train(
    Classifier& model, const Dataset& data, const TrainSchedule& schedule,
    const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Mean cross-entropy and accuracy in inference mode.
struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};
LossAccuracy score(const Classifier& model, std::span<const LabeledWindow> windows,
                   std::size_t batch_size = 256);

/// Predicted class per window (argmax, inference mode, one window at a time).
std::vector<Label> classify(const Classifier& model,
                            std::span<const LabeledWindow> windows);

}  // namespace bslip
