#pragma once

#include "jmorph/geom.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace jmorph {

// 3D scalar image. Data is x-fastest; affine maps voxel indices to world mm.
// Spacing and affine entries are quantized to float32 on construction so a
// file round trip reproduces them bit for bit. Values are finite after make();
// treat instances as immutable once built (ops below are pure).
struct Volume {
  std::array<int, 3> dim{0, 0, 0}; // W, H, D
  Vec3 spacing{1.0, 1.0, 1.0};     // mm
  AffineMap affine{};              // voxel -> world
  std::vector<double> data;

  // Validates invariants (size match, positive spacing, nonsingular affine,
  // finite values) and quantizes geometry to float32.
  static Volume make(std::array<int, 3> dim, Vec3 spacing, AffineMap affine,
                     std::vector<double> data);
  // Axis-aligned geometry: affine = diag(spacing), translation = origin.
  static Volume zeros(std::array<int, 3> dim, Vec3 spacing, Vec3 origin);

  size_t size() const { return size_t(dim[0]) * dim[1] * dim[2]; }
  size_t index(int i, int j, int k) const {
    return (size_t(k) * dim[1] + j) * dim[0] + i;
  }
  double at(int i, int j, int k) const { return data[index(i, j, k)]; }
  double &at(int i, int j, int k) { return data[index(i, j, k)]; }
  bool inside(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dim[0] && j < dim[1] && k < dim[2];
  }
  Vec3 voxel_to_world(const Vec3 &p) const { return affine.apply(p); }
  AffineMap world_to_voxel() const { return affine.inverse(); }

  void validate() const; // throws InvariantError
};

// Integer-labelled volume sharing Volume's geometry. Label 0 is background;
// every nonzero label present in `labels` must have a name.
struct LabelVolume {
  std::array<int, 3> dim{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  AffineMap affine{};
  std::vector<uint32_t> labels;
  std::map<uint32_t, std::string> names;

  static LabelVolume make(std::array<int, 3> dim, Vec3 spacing,
                          AffineMap affine, std::vector<uint32_t> labels,
                          std::map<uint32_t, std::string> names);

  size_t size() const { return size_t(dim[0]) * dim[1] * dim[2]; }
  size_t index(int i, int j, int k) const {
    return (size_t(k) * dim[1] + j) * dim[0] + i;
  }
  uint32_t at(int i, int j, int k) const { return labels[index(i, j, k)]; }
  uint32_t &at(int i, int j, int k) { return labels[index(i, j, k)]; }

  void validate() const;
};

// Trilinear interpolation at a continuous voxel coordinate; out-of-bounds
// reads are zero. Exact at integer nodes and on trilinear polynomials.
double sample_trilinear(const Volume &v, const Vec3 &p);

// Same value, plus d(sample)/dp. The derivative is piecewise constant per
// cell; at cell boundaries the lower cell's slope is reported.
double sample_trilinear_grad(const Volume &v, const Vec3 &p, Vec3 *grad);

// New grid with the requested dims/spacing covering the same physical extent:
// the low corner of the voxel bounding box is held fixed and direction
// cosines are kept. Identity geometry reproduces the input exactly.
Volume resample(const Volume &v, std::array<int, 3> target_dim,
                Vec3 target_spacing);

// Clips to the [1st, 99th] percentile (nearest-rank) then min-max scales to
// [0,1]. A constant volume maps to all zeros.
Volume normalize_intensity(const Volume &v);

// Threshold + largest 6-connected component. threshold_fraction <= 0 selects
// the threshold by Otsu's criterion on a 256-bin histogram; otherwise the
// threshold is vmin + fraction*(vmax - vmin). Returns the masked volume
// (background zeroed) and the binary mask (label 1 = "brain").
std::pair<Volume, LabelVolume> mask_brain(const Volume &v,
                                          double threshold_fraction);

// Affine-shifts the whole volume so the pool (mask voxels with label != 0,
// or everything when mask is null) has zero mean and unit variance. A
// constant pool yields all zeros; an empty pool is an error.
Volume standardize_over(const Volume &v, const LabelVolume *mask);

} // namespace jmorph
