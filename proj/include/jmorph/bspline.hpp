#pragma once

#include "jmorph/volume.hpp"

#include <array>
#include <vector>

namespace jmorph {

// Cubic B-spline weights for the 4-tap stencil at fractional offset f in
// [0,1). w[t] weights control point floor(s) - 1 + t. d1/d2 are derivatives
// with respect to s (grid units); callers divide by the cell size for world
// derivatives.
struct SplineWeights {
  double w[4];
  double d1[4];
  double d2[4];
};
SplineWeights cubic_bspline_weights(double f);

// Free-form deformation: world-space displacement u(y) parameterized by a
// regular control grid. The grid covers the fixed-image voxel-centre bounding
// box plus one ring, so every in-domain evaluation has a full 4-tap support.
struct BSplineTransform {
  Vec3 origin;               // world position of control point (0,0,0)
  Vec3 spacing;              // control cell size, mm
  std::array<int, 3> dims{}; // control point counts
  std::vector<Vec3> coeff;   // displacement per control point, mm; x fastest

  // Grid sized to cover [lo, hi] world box with control cells of
  // control_spacing mm; coefficients start at zero.
  static BSplineTransform for_domain(const Vec3 &lo, const Vec3 &hi,
                                     const Vec3 &control_spacing);

  size_t size() const { return size_t(dims[0]) * dims[1] * dims[2]; }
  size_t index(int i, int j, int k) const {
    return (size_t(k) * dims[1] + j) * dims[0] + i;
  }

  // Continuous grid coordinate of a world point.
  Vec3 grid_coord(const Vec3 &world) const {
    return {(world.x - origin.x) / spacing.x, (world.y - origin.y) / spacing.y,
            (world.z - origin.z) / spacing.z};
  }
  bool supported(const Vec3 &grid) const;

  // u(world); zero outside the supported region.
  Vec3 displacement(const Vec3 &world) const;
};

// Integral of all nine squared second spatial derivatives of u, summed over
// the three vector components, approximated on the fixed-image voxel grid
// with the given stride and scaled by the sampled voxel volume.
double bending_energy(const BSplineTransform &t, const Volume &domain,
                      int stride = 1);

// d(bending_energy)/d(coeff), accumulated into grad (same layout as coeff,
// 3 doubles per control point: x then y then z component).
void bending_energy_grad(const BSplineTransform &t, const Volume &domain,
                         int stride, std::vector<Vec3> &grad);

} // namespace jmorph
