#include "jmorph/bspline.hpp"

#include "jmorph/errors.hpp"

#include <cmath>

namespace jmorph {

SplineWeights cubic_bspline_weights(double f) {
  // Uniform cubic B-spline pieces at taps s-1..s+2 for f = frac(s).
  const double f2 = f * f, f3 = f2 * f;
  const double g = 1.0 - f;
  SplineWeights w;
  w.w[0] = g * g * g / 6.0;
  w.w[1] = (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0;
  w.w[2] = (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0;
  w.w[3] = f3 / 6.0;
  w.d1[0] = -g * g / 2.0;
  w.d1[1] = (3.0 * f2 - 4.0 * f) / 2.0;
  w.d1[2] = (-3.0 * f2 + 2.0 * f + 1.0) / 2.0;
  w.d1[3] = f2 / 2.0;
  w.d2[0] = g;
  w.d2[1] = 3.0 * f - 2.0;
  w.d2[2] = 1.0 - 3.0 * f;
  w.d2[3] = f;
  return w;
}

BSplineTransform BSplineTransform::for_domain(const Vec3 &lo, const Vec3 &hi,
                                              const Vec3 &control_spacing) {
  if (!(control_spacing.x > 0) || !(control_spacing.y > 0) ||
      !(control_spacing.z > 0))
    throw InvariantError("control spacing must be positive");
  BSplineTransform t;
  t.spacing = control_spacing;
  // One cell before the low corner; enough cells past the high corner that
  // the 4-tap stencil stays inside the grid over the whole box.
  t.origin = lo - control_spacing;
  for (int a = 0; a < 3; ++a) {
    const double extent = hi[a] - lo[a];
    if (extent < 0.0)
      throw InvariantError("domain box is inverted");
    t.dims[a] = int(std::ceil(extent / control_spacing[a])) + 4;
  }
  t.coeff.assign(t.size(), Vec3{});
  return t;
}

bool BSplineTransform::supported(const Vec3 &g) const {
  for (int a = 0; a < 3; ++a) {
    const int base = int(std::floor(g[a])) - 1;
    if (base < 0 || base + 3 > dims[a] - 1)
      return false;
  }
  return true;
}

Vec3 BSplineTransform::displacement(const Vec3 &world) const {
  const Vec3 g = grid_coord(world);
  if (!supported(g))
    return {};
  const int i0 = int(std::floor(g.x)) - 1;
  const int j0 = int(std::floor(g.y)) - 1;
  const int k0 = int(std::floor(g.z)) - 1;
  const SplineWeights wx = cubic_bspline_weights(g.x - std::floor(g.x));
  const SplineWeights wy = cubic_bspline_weights(g.y - std::floor(g.y));
  const SplineWeights wz = cubic_bspline_weights(g.z - std::floor(g.z));
  Vec3 u{};
  for (int c = 0; c < 4; ++c)
    for (int b = 0; b < 4; ++b) {
      const double wzy = wz.w[c] * wy.w[b];
      const size_t row = index(i0, j0 + b, k0 + c);
      for (int a = 0; a < 4; ++a) {
        const double w = wzy * wx.w[a];
        const Vec3 &cf = coeff[row + size_t(a)];
        u.x += w * cf.x;
        u.y += w * cf.y;
        u.z += w * cf.z;
      }
    }
  return u;
}

namespace {

// Shared sampling loop for the energy and its gradient. For each sampled
// voxel it forms the nine second-derivative tensor weights and either
// accumulates the squared displacement derivatives or splats them back.
template <typename Fn>
void for_each_bending_sample(const BSplineTransform &t, const Volume &domain,
                             int stride, Fn &&fn) {
  for (int k = 0; k < domain.dim[2]; k += stride)
    for (int j = 0; j < domain.dim[1]; j += stride)
      for (int i = 0; i < domain.dim[0]; i += stride) {
        const Vec3 w =
            domain.voxel_to_world({double(i), double(j), double(k)});
        const Vec3 g = t.grid_coord(w);
        if (!t.supported(g))
          continue;
        fn(g);
      }
}

} // namespace

double bending_energy(const BSplineTransform &t, const Volume &domain,
                      int stride) {
  if (stride < 1)
    throw InvariantError("bending stride must be >= 1");
  const double cell = domain.spacing.x * domain.spacing.y * domain.spacing.z *
                      double(stride) * stride * stride;
  const double ix = 1.0 / t.spacing.x, iy = 1.0 / t.spacing.y,
               iz = 1.0 / t.spacing.z;
  double energy = 0.0;
  for_each_bending_sample(t, domain, stride, [&](const Vec3 &g) {
    const int i0 = int(std::floor(g.x)) - 1;
    const int j0 = int(std::floor(g.y)) - 1;
    const int k0 = int(std::floor(g.z)) - 1;
    const SplineWeights wx = cubic_bspline_weights(g.x - std::floor(g.x));
    const SplineWeights wy = cubic_bspline_weights(g.y - std::floor(g.y));
    const SplineWeights wz = cubic_bspline_weights(g.z - std::floor(g.z));
    // d2[ab] = second derivative pair (a,b) of the displacement vector.
    Vec3 d2[3][3];
    for (int c = 0; c < 4; ++c)
      for (int b = 0; b < 4; ++b) {
        const size_t row = t.index(i0, j0 + b, k0 + c);
        for (int a = 0; a < 4; ++a) {
          const Vec3 &cf = t.coeff[row + size_t(a)];
          const double wxx = wx.d2[a] * wy.w[b] * wz.w[c] * ix * ix;
          const double wyy = wx.w[a] * wy.d2[b] * wz.w[c] * iy * iy;
          const double wzz = wx.w[a] * wy.w[b] * wz.d2[c] * iz * iz;
          const double wxy = wx.d1[a] * wy.d1[b] * wz.w[c] * ix * iy;
          const double wxz = wx.d1[a] * wy.w[b] * wz.d1[c] * ix * iz;
          const double wyz = wx.w[a] * wy.d1[b] * wz.d1[c] * iy * iz;
          d2[0][0] += cf * wxx;
          d2[1][1] += cf * wyy;
          d2[2][2] += cf * wzz;
          d2[0][1] += cf * wxy;
          d2[0][2] += cf * wxz;
          d2[1][2] += cf * wyz;
        }
      }
    double s = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b) {
        const double mult = (a == b) ? 1.0 : 2.0; // symmetric off-diagonals
        s += mult * d2[a][b].dot(d2[a][b]);
      }
    energy += s;
  });
  return energy * cell;
}

void bending_energy_grad(const BSplineTransform &t, const Volume &domain,
                         int stride, std::vector<Vec3> &grad) {
  if (stride < 1)
    throw InvariantError("bending stride must be >= 1");
  if (grad.size() != t.coeff.size())
    throw InvariantError("bending gradient size mismatch");
  const double cell = domain.spacing.x * domain.spacing.y * domain.spacing.z *
                      double(stride) * stride * stride;
  const double ix = 1.0 / t.spacing.x, iy = 1.0 / t.spacing.y,
               iz = 1.0 / t.spacing.z;
  for_each_bending_sample(t, domain, stride, [&](const Vec3 &g) {
    const int i0 = int(std::floor(g.x)) - 1;
    const int j0 = int(std::floor(g.y)) - 1;
    const int k0 = int(std::floor(g.z)) - 1;
    const SplineWeights wx = cubic_bspline_weights(g.x - std::floor(g.x));
    const SplineWeights wy = cubic_bspline_weights(g.y - std::floor(g.y));
    const SplineWeights wz = cubic_bspline_weights(g.z - std::floor(g.z));
    double wt[6][4][4][4]; // per-pair tensor weights, [pair][c][b][a]
    Vec3 d2[6];
    for (int c = 0; c < 4; ++c)
      for (int b = 0; b < 4; ++b) {
        const size_t row = t.index(i0, j0 + b, k0 + c);
        for (int a = 0; a < 4; ++a) {
          const Vec3 &cf = t.coeff[row + size_t(a)];
          wt[0][c][b][a] = wx.d2[a] * wy.w[b] * wz.w[c] * ix * ix;
          wt[1][c][b][a] = wx.w[a] * wy.d2[b] * wz.w[c] * iy * iy;
          wt[2][c][b][a] = wx.w[a] * wy.w[b] * wz.d2[c] * iz * iz;
          wt[3][c][b][a] = wx.d1[a] * wy.d1[b] * wz.w[c] * ix * iy;
          wt[4][c][b][a] = wx.d1[a] * wy.w[b] * wz.d1[c] * ix * iz;
          wt[5][c][b][a] = wx.w[a] * wy.d1[b] * wz.d1[c] * iy * iz;
          for (int p = 0; p < 6; ++p)
            d2[p] += cf * wt[p][c][b][a];
        }
      }
    // dE/dcoeff = 2 * cell * sum_pairs mult * d2[pair] * weight[pair].
    for (int c = 0; c < 4; ++c)
      for (int b = 0; b < 4; ++b) {
        const size_t row = t.index(i0, j0 + b, k0 + c);
        for (int a = 0; a < 4; ++a) {
          Vec3 acc{};
          for (int p = 0; p < 6; ++p) {
            const double mult = p < 3 ? 1.0 : 2.0;
            acc += d2[p] * (mult * wt[p][c][b][a]);
          }
          grad[row + size_t(a)] += acc * (2.0 * cell);
        }
      }
  });
}

} // namespace jmorph
