#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bslip::nn {

/// Activations: rows are channels, columns are (sample, step) pairs laid out
/// as sample * steps + step. Column-major, so one step's channel vector is
/// contiguous.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  /// Element (r, c) of a rank-2 tensor.
  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

  /// True when every value is finite.
  bool is_finite() const;
  /// Throws ShapeError unless product(shape) == size().
  void check() const;

  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

/// Named parameters with parallel gradients. Indices are stable, so layers
/// hold an index rather than a pointer.
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const { return values_.size(); }
  std::size_t total_elements() const;

  Tensor& value(std::size_t i) { return values_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  Tensor& grad(std::size_t i) { return grads_.at(i); }
  const Tensor& grad(std::size_t i) const { return grads_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  void zero_grad();
  /// Index of `name`; throws ConfigError when missing.
  std::size_t find(const std::string& name) const;

  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
};

}  // namespace bslip::nn
