#pragma once

#include <cstdint>
#include <vector>

#include "bslip/tensor.hpp"

namespace bslip::nn {

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for every tensor in a ParamStore. Moments are allocated
/// lazily on the first step.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// One bias-corrected Adam update using the gradients held in `params`.
void adam_step(ParamStore& params, AdamState& state);

}  // namespace bslip::nn
