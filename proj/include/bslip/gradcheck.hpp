#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bslip/tensor.hpp"

namespace bslip::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so coordinates whose true
  /// gradient is zero are judged on absolute error.
  double floor = 1e-6;
  std::size_t configurations = 20;
  /// Coordinates sampled per parameter tensor of the full TCN. Single
  /// layers are checked on every coordinate.
  std::size_t tcn_coords_per_tensor = 6;
  std::uint64_t seed = 7;
  /// A check fails outright when more coordinates than this fraction had to
  /// be skipped as non-smooth.
  double max_kink_fraction = 0.01;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates where the loss was not smooth within one step (excluded
  /// from max_rel_error).
  std::size_t kink_skipped = 0;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Central difference of `loss` with respect to `*x`, restoring `*x`.
double central_difference(const std::function<double()>& loss, double* x,
                          double step);

/// Every layer on its own (conv dense and routed, layer norm, dense, SELU,
/// dropout, softmax + cross-entropy) plus the default TCN, each over
/// options.configurations random configurations.
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options);

}  // namespace bslip::nn
