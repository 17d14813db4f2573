#include "jmorph/phantom.hpp"

#include "jmorph/errors.hpp"
#include "jmorph/rng.hpp"

#include <cmath>
#include <vector>

namespace jmorph {

void PhantomSpec::validate() const {
  if (dim[0] <= 0 || dim[1] <= 0 || dim[2] <= 0)
    throw ConfigError("phantom dims must be positive");
  if (!(atrophy_factor > 0.0 && atrophy_factor <= 1.0))
    throw ConfigError("atrophy factor must be in (0, 1]");
  if (!(noise_sigma >= 0.0))
    throw ConfigError("noise sigma must be >= 0");
  if (atrophy_region < 1 || atrophy_region > 12)
    throw ConfigError("atrophy region must be a nonzero atlas label");
}

double RadialAtrophy::radius_scale(double r) const {
  if (r <= r0)
    return kappa;
  if (r >= r1)
    return 1.0;
  double t = (r - r0) / (r1 - r0);
  double s = t * t * (3.0 - 2.0 * t);
  return kappa + (1.0 - kappa) * s;
}

Vec3 RadialAtrophy::apply(const Vec3 &x) const {
  if (kappa == 1.0)
    return x;
  Vec3 d = x - center;
  return center + d * radius_scale(d.norm());
}

Vec3 RadialAtrophy::pull(const Vec3 &y) const {
  if (kappa == 1.0)
    return y;
  Vec3 d = y - center;
  double rho = d.norm();
  if (rho <= 0.0)
    return y;
  // r * radius_scale(r) is monotone in r for kappa <= 1, so bisect
  double lo = std::min(rho, rho / kappa), hi = std::max(rho, rho / kappa);
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid * radius_scale(mid) < rho)
      lo = mid;
    else
      hi = mid;
  }
  double r = 0.5 * (lo + hi);
  return center + d * (r / rho);
}

double ct_remap(double v) { return v * (2.0 - v); }

namespace {

// Consumes exactly three draws from rng for the center dither, so callers
// sharing the stream stay aligned.
RadialAtrophy atrophy_from(const PhantomSpec &spec, const MiniTemplate &t,
                           Rng &rng) {
  double sx = 0, sy = 0, sz = 0;
  long n = 0;
  const auto &reg = t.regions;
  for (int k = 0; k < reg.dim[2]; ++k)
    for (int j = 0; j < reg.dim[1]; ++j)
      for (int i = 0; i < reg.dim[0]; ++i)
        if (reg.at(i, j, k) == spec.atrophy_region) {
          sx += i;
          sy += j;
          sz += k;
          ++n;
        }
  if (n == 0)
    throw InvariantError("atrophy region has no voxels in the template");
  Vec3 dither{2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0,
              2.0 * rng.uniform() - 1.0};
  RadialAtrophy a;
  a.center = Vec3{sx / double(n), sy / double(n), sz / double(n)} + dither;
  a.kappa = std::cbrt(spec.atrophy_factor);
  double sc = t.image.dim[0] / 32.0;
  a.r0 = 11.0 * sc;
  a.r1 = 16.0 * sc;
  return a;
}

} // namespace

RadialAtrophy atrophy_for(const PhantomSpec &spec, const MiniTemplate &t) {
  spec.validate();
  Rng rng(spec.seed);
  return atrophy_from(spec, t, rng);
}

Phantom generate_phantom(const PhantomSpec &spec, const MiniTemplate &t) {
  spec.validate();
  if (spec.dim != t.image.dim)
    throw ConfigError("phantom dims must match the template grid");
  Rng rng(spec.seed);
  RadialAtrophy map = atrophy_from(spec, t, rng);

  const auto dim = spec.dim;
  const size_t nvox = size_t(dim[0]) * dim[1] * dim[2];
  std::vector<double> mri(nvox), ct(nvox);
  std::vector<uint32_t> lab(nvox);
  size_t idx = 0;
  for (int k = 0; k < dim[2]; ++k)
    for (int j = 0; j < dim[1]; ++j)
      for (int i = 0; i < dim[0]; ++i, ++idx) {
        // subject voxel y holds the template content the map pulls onto it
        Vec3 p = map.pull({double(i), double(j), double(k)});
        double clean = sample_trilinear(t.image, p);
        mri[idx] = clean;
        ct[idx] = ct_remap(clean);
        int pi = int(std::lround(p.x)), pj = int(std::lround(p.y)),
            pk = int(std::lround(p.z));
        lab[idx] = t.regions.dim[0] > pi && pi >= 0 && t.regions.dim[1] > pj &&
                           pj >= 0 && t.regions.dim[2] > pk && pk >= 0
                       ? t.regions.at(pi, pj, pk)
                       : 0;
      }
  if (spec.noise_sigma > 0.0) {
    for (size_t v = 0; v < nvox; ++v)
      mri[v] += spec.noise_sigma * rng.normal();
    for (size_t v = 0; v < nvox; ++v)
      ct[v] += spec.noise_sigma * rng.normal();
  }

  Phantom out;
  out.mri = Volume::make(dim, t.image.spacing, t.image.affine, std::move(mri));
  out.ct = Volume::make(dim, t.image.spacing, t.image.affine, std::move(ct));
  out.labels = LabelVolume::make(dim, t.image.spacing, t.image.affine,
                                 std::move(lab), t.regions.names);
  out.gt = DisplacementField::zero(out.mri);
  idx = 0;
  for (int k = 0; k < dim[2]; ++k)
    for (int j = 0; j < dim[1]; ++j)
      for (int i = 0; i < dim[0]; ++i, ++idx) {
        Vec3 x{double(i), double(j), double(k)};
        out.gt.v[idx] = map.apply(x) - x;
      }
  return out;
}

} // namespace jmorph
