#pragma once

#include <string>
#include <vector>

namespace jmorph {

// Dense f64 tensor of rank 1..5, laid out with the last axis fastest. The
// canonical 5-axis order is (N, C, D, H, W). `grad` is either empty or a
// buffer of exactly val's length.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;

  static Tensor zeros(std::vector<int> shape);

  size_t size() const;
  bool has_grad() const { return !grad.empty(); }
  void require_grad(); // allocates (zeroed) if absent
  void zero_grad();

  void validate() const;   // rank, shape product, grad length
  bool all_finite() const; // values and any gradient
};

std::string shape_str(const std::vector<int> &shape);

} // namespace jmorph
