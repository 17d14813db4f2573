#pragma once

#include "jmorph/bspline.hpp"
#include "jmorph/mutual_information.hpp"
#include "jmorph/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace jmorph {

// World-space affine alignment y -> matrix*y + translation. `converged`
// reports whether the optimizer stopped on its own before the iteration cap
// (a capped run still returns the best iterate).
struct AffineTransform {
  Mat3 matrix = Mat3::identity();
  Vec3 translation{};
  bool converged = true;

  AffineMap map() const { return AffineMap{matrix, translation}; }
};

// Per-voxel displacement v(x) = phi(x) - x on the fixed grid, in voxel
// units. phi maps fixed voxel coordinates into moving voxel coordinates
// (through world space); with matching geometries this is the usual
// template-to-subject field.
struct DisplacementField {
  std::array<int, 3> dim{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  AffineMap affine{};
  std::vector<Vec3> v;

  static DisplacementField zero(const Volume &geometry);

  size_t size() const { return size_t(dim[0]) * dim[1] * dim[2]; }
  size_t index(int i, int j, int k) const {
    return (size_t(k) * dim[1] + j) * dim[0] + i;
  }
  const Vec3 &at(int i, int j, int k) const { return v[index(i, j, k)]; }
  Vec3 &at(int i, int j, int k) { return v[index(i, j, k)]; }

  void validate() const;
};

struct RegistrationConfig {
  double alpha = 0.01;            // bending weight in -MI + alpha*BE
  int bins = 32;
  int pyramid_levels = 3;         // coarsest factor 2^(levels-1)
  int affine_iterations = 80;     // per pyramid level
  int bspline_iterations = 60;    // per pyramid level
  double control_spacing_vox = 8; // control cell, fixed-image voxels
  int bending_stride = 2;         // bending quadrature stride, voxels
  ParzenWindow window = ParzenWindow::cubic;
  bool fd_gradient = false;       // reference gradient path (slow)
  double tolerance = 1e-8;        // objective improvement considered progress
  uint64_t seed = 0;

  void validate() const;
};

struct BSplineResult {
  BSplineTransform transform;
  DisplacementField field; // composed affine+spline map on the fixed grid
  bool converged = true;
};

// Maximizes MI over a multi-resolution pyramid by steepest descent with a
// monotone backtracking line search. Deterministic: fixed evaluation and
// reduction order, no stochastic sampling.
AffineTransform register_affine(const Volume &fixed, const Volume &moving,
                                const RegistrationConfig &cfg);

// Minimizes -MI + alpha*bending over control-point displacements acting in
// fixed world space before the (frozen) affine: phi(y) = A(y + u(y)).
BSplineResult register_bspline(const Volume &fixed, const Volume &moving,
                               const AffineTransform &init,
                               const RegistrationConfig &cfg);

// Pull-back warps (output voxel x reads moving at phi(x)).
Volume warp(const Volume &moving, const DisplacementField &field);
Volume warp(const Volume &moving, const AffineTransform &t,
            const Volume &fixed_geometry);

// Fixed-point inversion: returns w with (id + w) o (id + v) ~ id.
DisplacementField invert_field(const DisplacementField &field,
                               int iterations = 30);

// Three-component NIfTI serialization (suffixes _vx/_vy/_vz .nii).
void save_field(const DisplacementField &f, const std::string &basepath);
DisplacementField load_field(const std::string &basepath);

// Plain-text key/value transforms with round-trippable decimal floats.
void save_affine(const AffineTransform &t, const std::string &path);
AffineTransform load_affine(const std::string &path);
void save_bspline(const BSplineTransform &t, const std::string &path);
BSplineTransform load_bspline(const std::string &path);

} // namespace jmorph
