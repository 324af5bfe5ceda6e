#include "bslip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "bslip/error.hpp"

namespace bslip::nn {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), values(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  check();
}

bool Tensor::is_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::check() const {
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_product(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
}

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  names_.push_back(std::move(name));
  values_.emplace_back(shape);
  grads_.emplace_back(std::move(shape));
  return values_.size() - 1;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& t : values_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& g : grads_) std::fill(g.values.begin(), g.values.end(), 0.0);
}

std::size_t ParamStore::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("no parameter named " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

bool ParamStore::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](const Tensor& t) { return t.is_finite(); });
}

}  // namespace bslip::nn
