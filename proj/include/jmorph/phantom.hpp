#pragma once

#include "jmorph/atlas.hpp"
#include "jmorph/registration.hpp"
#include "jmorph/volume.hpp"

#include <array>
#include <cstdint>

namespace jmorph {

struct PhantomSpec {
  std::array<int, 3> dim{32, 32, 32}; // must match the template grid
  uint64_t seed = 0;        // drives atrophy-center dither and noise
  uint32_t atrophy_region = 5;
  double atrophy_factor = 1.0; // volumetric shrink s, (0,1]; 1 = no atrophy
  double noise_sigma = 0.0;    // additive Gaussian, per modality

  void validate() const; // throws ConfigError
};

// Radial volume-change map about a center: radii scale by kappa out to r0,
// then taper smoothly back to identity at r1. kappa is the cube root of the
// volume factor. apply goes template -> subject (the shrink); pull is its
// exact inverse, solved to well below float precision. kappa == 1
// short-circuits to the identity so untouched phantoms stay bit-equal to
// the template.
struct RadialAtrophy {
  Vec3 center{};
  double kappa = 1.0;
  double r0 = 11.0, r1 = 16.0;

  double radius_scale(double r) const;
  Vec3 apply(const Vec3 &x) const;
  Vec3 pull(const Vec3 &y) const;
};

struct Phantom {
  Volume mri;
  Volume ct;          // fixed intensity remap of the same anatomy
  LabelVolume labels; // template regions carried into subject space
  DisplacementField gt; // template grid -> subject coordinates
};

// The atrophy map a spec resolves to: centered on the region's centroid
// plus a seeded dither within one voxel per axis, radii scaled with the
// grid so smaller templates shrink proportionally.
RadialAtrophy atrophy_for(const PhantomSpec &spec, const MiniTemplate &t);

// Pure function of (spec, template): same inputs, bit-identical outputs.
Phantom generate_phantom(const PhantomSpec &spec, const MiniTemplate &t);

// The CT channel's intensity remap, applied pointwise to clean MRI values.
double ct_remap(double v);

} // namespace jmorph
