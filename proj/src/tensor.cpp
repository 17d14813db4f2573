#include "jmorph/tensor.hpp"

#include "jmorph/errors.hpp"

#include <cmath>

namespace jmorph {

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  t.shape = std::move(shape);
  size_t n = 1;
  for (int d : t.shape)
    n *= size_t(d > 0 ? d : 0);
  t.val.assign(n, 0.0);
  t.validate();
  return t;
}

size_t Tensor::size() const {
  size_t n = 1;
  for (int d : shape)
    n *= size_t(d > 0 ? d : 0);
  return n;
}

void Tensor::require_grad() {
  if (grad.empty())
    grad.assign(val.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty())
    grad.assign(val.size(), 0.0);
}

void Tensor::validate() const {
  if (shape.empty() || shape.size() > 5)
    throw InvariantError("tensor rank must be 1..5, got " + shape_str(shape));
  for (int d : shape)
    if (d <= 0)
      throw InvariantError("tensor axis must be positive in " +
                           shape_str(shape));
  if (val.size() != size())
    throw InvariantError("tensor buffer length " + std::to_string(val.size()) +
                         " does not match shape " + shape_str(shape));
  if (!grad.empty() && grad.size() != val.size())
    throw InvariantError("tensor gradient length mismatches values");
}

bool Tensor::all_finite() const {
  for (double v : val)
    if (!std::isfinite(v))
      return false;
  for (double g : grad)
    if (!std::isfinite(g))
      return false;
  return true;
}

std::string shape_str(const std::vector<int> &shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i)
      s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

} // namespace jmorph
