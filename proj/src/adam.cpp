#include "bslip/adam.hpp"

#include <cmath>

#include "bslip/error.hpp"

namespace bslip::nn {

void adam_step(ParamStore& params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    if (state.t != 0) {
      throw StateError("adam state has no moments but step counter is " +
                       std::to_string(state.t));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.emplace_back(params.value(i).shape);
      state.v.emplace_back(params.value(i).shape);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam state tracks " + std::to_string(state.m.size()) +
                     " tensors, store has " + std::to_string(params.size()));
  }

  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params.value(i);
    const Tensor& g = params.grad(i);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (m.size() != w.size() || v.size() != w.size()) {
      throw ShapeError("adam moment shape mismatch for " + params.name(i));
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / corr1;
      const double vhat = v[k] / corr2;
      w[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace bslip::nn
