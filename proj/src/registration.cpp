#include "jmorph/registration.hpp"

#include "jmorph/errors.hpp"
#include "jmorph/kernels.hpp"
#include "jmorph/nifti.hpp"
#include "jmorph/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <cstdio>
#include <cstdlib>

namespace jmorph {

DisplacementField DisplacementField::zero(const Volume &geometry) {
  DisplacementField f;
  f.dim = geometry.dim;
  f.spacing = geometry.spacing;
  f.affine = geometry.affine;
  f.v.assign(f.size(), Vec3{});
  return f;
}

void DisplacementField::validate() const {
  if (v.size() != size())
    throw InvariantError("displacement field size mismatch");
  for (const Vec3 &d : v)
    if (!std::isfinite(d.x) || !std::isfinite(d.y) || !std::isfinite(d.z))
      throw InvariantError("displacement field contains non-finite vectors");
}

void RegistrationConfig::validate() const {
  if (alpha < 0.0)
    throw ConfigError("alpha must be >= 0");
  if (bins < 4)
    throw ConfigError("bins must be >= 4");
  if (pyramid_levels < 1)
    throw ConfigError("pyramid_levels must be >= 1");
  if (affine_iterations < 1 || bspline_iterations < 1)
    throw ConfigError("iterations must be >= 1");
  if (control_spacing_vox <= 0.0)
    throw ConfigError("control_spacing_vox must be > 0");
  if (bending_stride < 1)
    throw ConfigError("bending_stride must be >= 1");
}

namespace {

std::pair<Vec3, Vec3> world_bbox(const Volume &v) {
  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (int c = 0; c < 8; ++c) {
    const Vec3 idx{double((c & 1) ? v.dim[0] - 1 : 0),
                   double((c & 2) ? v.dim[1] - 1 : 0),
                   double((c & 4) ? v.dim[2] - 1 : 0)};
    const Vec3 w = v.voxel_to_world(idx);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], w[a]);
      hi[a] = std::max(hi[a], w[a]);
    }
  }
  return {lo, hi};
}

Volume pyramid_level(const Volume &v, int factor) {
  if (factor <= 1)
    return v;
  std::array<int, 3> dim;
  for (int a = 0; a < 3; ++a)
    dim[a] = std::max(1, (v.dim[a] + factor - 1) / factor);
  return resample(v, dim, v.spacing * double(factor));
}

// Monotone L-BFGS with backtracking (Armijo) line search. The objective can
// only go down across accepted steps; when the quasi-Newton direction fails
// to descend the history resets and the step falls back to -gradient.
// Returns true when the loop stopped by stationarity or lack of progress,
// false when the iteration cap cut off a still-improving run.
template <typename FnF, typename FnG>
bool descend(std::vector<double> &p, FnF &&objective, FnG &&gradient,
             int max_iters, double tol) {
  const auto &K = kernels::active_kernels();
  const size_t np = p.size();
  const int hist = 10;
  std::vector<std::vector<double>> sv, yv;
  std::vector<double> rho;

  double fp = objective(p);
  std::vector<double> grad(np), dir(np), trial(np), grad_new(np);
  gradient(p, grad);
  double last_drop = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    const double gn2 = K.sumsq(np, grad.data());
    if (std::getenv("JMAP_DEBUG_DESCENT"))
      std::fprintf(stderr, "descend it=%d f=%.12f gn2=%.3e\n", it, fp, gn2);
    if (!(gn2 > 1e-24))
      return true; // stationary

    // two-loop recursion for dir = -H*grad
    std::copy(grad.begin(), grad.end(), dir.begin());
    std::vector<double> alpha(sv.size());
    for (size_t h = sv.size(); h-- > 0;) {
      alpha[h] = rho[h] * K.dot(np, sv[h].data(), dir.data());
      K.axpy(np, -alpha[h], yv[h].data(), dir.data());
    }
    if (!sv.empty()) {
      const double yy = K.sumsq(np, yv.back().data());
      const double gamma = 1.0 / (rho.back() * yy);
      K.scale_shift(np, dir.data(), gamma, 0.0, dir.data());
      for (size_t h = 0; h < sv.size(); ++h) {
        const double beta = rho[h] * K.dot(np, yv[h].data(), dir.data());
        K.axpy(np, alpha[h] - beta, sv[h].data(), dir.data());
      }
    }
    for (double &d : dir)
      d = -d;
    double dd = K.dot(np, grad.data(), dir.data());
    if (!(dd < -1e-24)) { // not a descent direction: restart
      sv.clear();
      yv.clear();
      rho.clear();
      for (size_t i = 0; i < np; ++i)
        dir[i] = -grad[i];
      dd = -gn2;
    }

    double step = sv.empty() ? 0.25 / std::sqrt(gn2) : 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      std::copy(p.begin(), p.end(), trial.begin());
      K.axpy(np, step, dir.data(), trial.data());
      const double ft = objective(trial);
      if (ft <= fp + 1e-4 * step * dd) {
        last_drop = fp - ft;
        fp = ft;
        gradient(trial, grad_new);
        std::vector<double> s(np), y(np);
        for (size_t i = 0; i < np; ++i) {
          s[i] = trial[i] - p[i];
          y[i] = grad_new[i] - grad[i];
        }
        const double ys = K.dot(np, y.data(), s.data());
        if (ys > 1e-12 * std::sqrt(K.sumsq(np, y.data()) *
                                   K.sumsq(np, s.data()))) {
          sv.push_back(std::move(s));
          yv.push_back(std::move(y));
          rho.push_back(1.0 / ys);
          if (int(sv.size()) > hist) {
            sv.erase(sv.begin());
            yv.erase(yv.begin());
            rho.erase(rho.begin());
          }
        }
        p.swap(trial);
        grad.swap(grad_new);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted)
      return true; // line search exhausted: no descent available
    if (last_drop < tol)
      return true;
  }
  return last_drop < tol;
}

// Per-voxel cubic stencil into the control grid, precomputed once per
// pyramid level (the grid coordinate of a fixed voxel never changes).
struct VoxelStencil {
  int i0, j0, k0;
  bool ok; // full 4-tap support inside the control grid
  double wx[4], wy[4], wz[4];
};

struct Moving {
  const Volume *vol;
  AffineMap world_to_voxel;
};

} // namespace

AffineTransform register_affine(const Volume &fixed, const Volume &moving,
                                const RegistrationConfig &cfg) {
  cfg.validate();
  const auto [blo, bhi] = world_bbox(fixed);
  const double extent =
      ((bhi.x - blo.x) + (bhi.y - blo.y) + (bhi.z - blo.z)) / 3.0;
  const double sigma_t = std::max(extent / 4.0, 1e-6); // translation scale

  // Scaled parameters: 9 matrix entries, then translation / sigma_t.
  std::vector<double> p = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  bool converged = true;

  for (int level = cfg.pyramid_levels - 1; level >= 0; --level) {
    const int factor = 1 << level;
    const Volume flev = pyramid_level(fixed, factor);
    const Volume mlev = pyramid_level(moving, factor);
    const auto [mlo, mhi] =
        std::minmax_element(mlev.data.begin(), mlev.data.end());
    const MiEstimator est(flev, *mlo, *mhi, cfg.bins, cfg.window);
    if (est.degenerate())
      continue;
    const AffineMap w2v = mlev.world_to_voxel();

    std::vector<Vec3> world(flev.size());
    {
      size_t n = 0;
      for (int k = 0; k < flev.dim[2]; ++k)
        for (int j = 0; j < flev.dim[1]; ++j)
          for (int i = 0; i < flev.dim[0]; ++i)
            world[n++] =
                flev.voxel_to_world({double(i), double(j), double(k)});
    }

    auto decode = [&](const std::vector<double> &q) {
      AffineMap m;
      std::copy_n(q.begin(), 9, m.linear.m.begin());
      m.offset = {q[9] * sigma_t, q[10] * sigma_t, q[11] * sigma_t};
      return m;
    };
    std::vector<double> warped(flev.size());
    auto fill_warped = [&](const AffineMap &m) {
      const AffineMap full = w2v.compose(m);
      for (size_t i = 0; i < world.size(); ++i)
        warped[i] = sample_trilinear(mlev, full.apply(world[i]));
    };
    auto objective = [&](const std::vector<double> &q) {
      fill_warped(decode(q));
      return -est.eval(warped);
    };
    std::vector<double> dmi;
    auto gradient = [&](const std::vector<double> &q,
                        std::vector<double> &g) {
      const AffineMap m = decode(q);
      const AffineMap full = w2v.compose(m);
      fill_warped(m);
      est.eval_grad(warped, dmi);
      g.assign(12, 0.0);
      const Mat3 w2vT = w2v.linear.transposed();
      for (size_t i = 0; i < world.size(); ++i) {
        if (dmi[i] == 0.0)
          continue;
        Vec3 gv;
        sample_trilinear_grad(mlev, full.apply(world[i]), &gv);
        const Vec3 h = w2vT * gv; // d(warped)/d(world position)
        const Vec3 &y = world[i];
        const double s = -dmi[i]; // objective is -MI
        g[0] += s * h.x * y.x;
        g[1] += s * h.x * y.y;
        g[2] += s * h.x * y.z;
        g[3] += s * h.y * y.x;
        g[4] += s * h.y * y.y;
        g[5] += s * h.y * y.z;
        g[6] += s * h.z * y.x;
        g[7] += s * h.z * y.y;
        g[8] += s * h.z * y.z;
        g[9] += s * h.x * sigma_t;
        g[10] += s * h.y * sigma_t;
        g[11] += s * h.z * sigma_t;
      }
    };
    auto fd_gradient = [&](const std::vector<double> &q,
                           std::vector<double> &g) {
      g.assign(12, 0.0);
      std::vector<double> qq = q;
      const double h = 1e-5;
      for (size_t a = 0; a < 12; ++a) {
        qq[a] = q[a] + h;
        const double fp_ = objective(qq);
        qq[a] = q[a] - h;
        const double fm = objective(qq);
        qq[a] = q[a];
        g[a] = (fp_ - fm) / (2.0 * h);
      }
    };

    bool level_ok;
    if (cfg.fd_gradient)
      level_ok = descend(p, objective, fd_gradient, cfg.affine_iterations,
                         cfg.tolerance);
    else
      level_ok = descend(p, objective, gradient, cfg.affine_iterations,
                         cfg.tolerance);
    if (level == 0)
      converged = level_ok;
  }

  AffineTransform out;
  std::copy_n(p.begin(), 9, out.matrix.m.begin());
  out.translation = {p[9] * sigma_t, p[10] * sigma_t, p[11] * sigma_t};
  out.converged = converged;
  if (std::abs(out.matrix.det()) <= 1e-12)
    throw InvariantError("affine registration produced a singular matrix");
  return out;
}

BSplineResult register_bspline(const Volume &fixed, const Volume &moving,
                               const AffineTransform &init,
                               const RegistrationConfig &cfg) {
  cfg.validate();
  const auto [blo, bhi] = world_bbox(fixed);
  const Vec3 delta{cfg.control_spacing_vox * fixed.spacing.x,
                   cfg.control_spacing_vox * fixed.spacing.y,
                   cfg.control_spacing_vox * fixed.spacing.z};
  BSplineTransform spline = BSplineTransform::for_domain(blo, bhi, delta);
  const size_t nc = spline.size();
  std::vector<double> p(nc * 3, 0.0);
  bool converged = true;
  const AffineMap aff = init.map();

  for (int level = cfg.pyramid_levels - 1; level >= 0; --level) {
    const int factor = 1 << level;
    const Volume flev = pyramid_level(fixed, factor);
    const Volume mlev = pyramid_level(moving, factor);
    const auto [mlo, mhi] =
        std::minmax_element(mlev.data.begin(), mlev.data.end());
    const MiEstimator est(flev, *mlo, *mhi, cfg.bins, cfg.window);
    if (est.degenerate())
      continue;
    const AffineMap w2v = mlev.world_to_voxel();
    const AffineMap post = w2v.compose(aff); // world -> moving voxel
    const Mat3 postT = post.linear.transposed();

    const size_t n = flev.size();
    std::vector<Vec3> world(n);
    std::vector<VoxelStencil> sten(n);
    {
      size_t idx = 0;
      for (int k = 0; k < flev.dim[2]; ++k)
        for (int j = 0; j < flev.dim[1]; ++j)
          for (int i = 0; i < flev.dim[0]; ++i, ++idx) {
            const Vec3 w =
                flev.voxel_to_world({double(i), double(j), double(k)});
            world[idx] = w;
            const Vec3 g = spline.grid_coord(w);
            VoxelStencil &s = sten[idx];
            s.ok = spline.supported(g);
            s.i0 = int(std::floor(g.x)) - 1;
            s.j0 = int(std::floor(g.y)) - 1;
            s.k0 = int(std::floor(g.z)) - 1;
            const SplineWeights wx =
                cubic_bspline_weights(g.x - std::floor(g.x));
            const SplineWeights wy =
                cubic_bspline_weights(g.y - std::floor(g.y));
            const SplineWeights wz =
                cubic_bspline_weights(g.z - std::floor(g.z));
            std::copy_n(wx.w, 4, s.wx);
            std::copy_n(wy.w, 4, s.wy);
            std::copy_n(wz.w, 4, s.wz);
          }
    }

    auto displacement_at = [&](const std::vector<double> &q, size_t i) {
      const VoxelStencil &s = sten[i];
      Vec3 u{};
      if (!s.ok)
        return u;
      for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b) {
          const double wzy = s.wz[c] * s.wy[b];
          const size_t row = spline.index(s.i0, s.j0 + b, s.k0 + c);
          for (int a = 0; a < 4; ++a) {
            const double w = wzy * s.wx[a];
            const double *cf = q.data() + (row + size_t(a)) * 3;
            u.x += w * cf[0];
            u.y += w * cf[1];
            u.z += w * cf[2];
          }
        }
      return u;
    };

    std::vector<double> warped(n);
    auto fill_warped = [&](const std::vector<double> &q) {
      for (size_t i = 0; i < n; ++i)
        warped[i] =
            sample_trilinear(mlev, post.apply(world[i] + displacement_at(q, i)));
    };
    auto sync_coeff = [&](const std::vector<double> &q) {
      for (size_t c = 0; c < nc; ++c)
        spline.coeff[c] = {q[c * 3], q[c * 3 + 1], q[c * 3 + 2]};
    };
    auto objective = [&](const std::vector<double> &q) {
      fill_warped(q);
      double f = -est.eval(warped);
      if (cfg.alpha > 0.0) {
        sync_coeff(q);
        f += cfg.alpha * bending_energy(spline, fixed, cfg.bending_stride);
      }
      return f;
    };
    std::vector<double> dmi;
    std::vector<Vec3> bgrad(nc);
    auto gradient = [&](const std::vector<double> &q,
                        std::vector<double> &g) {
      fill_warped(q);
      est.eval_grad(warped, dmi);
      g.assign(nc * 3, 0.0);
      for (size_t i = 0; i < n; ++i) {
        const VoxelStencil &s = sten[i];
        if (dmi[i] == 0.0 || !s.ok)
          continue;
        Vec3 gv;
        sample_trilinear_grad(
            mlev, post.apply(world[i] + displacement_at(q, i)), &gv);
        const Vec3 h = (postT * gv) * -dmi[i]; // objective is -MI
        for (int c = 0; c < 4; ++c)
          for (int b = 0; b < 4; ++b) {
            const double wzy = s.wz[c] * s.wy[b];
            const size_t row = spline.index(s.i0, s.j0 + b, s.k0 + c);
            for (int a = 0; a < 4; ++a) {
              const double w = wzy * s.wx[a];
              double *gc = g.data() + (row + size_t(a)) * 3;
              gc[0] += w * h.x;
              gc[1] += w * h.y;
              gc[2] += w * h.z;
            }
          }
      }
      if (cfg.alpha > 0.0) {
        sync_coeff(q);
        std::fill(bgrad.begin(), bgrad.end(), Vec3{});
        bending_energy_grad(spline, fixed, cfg.bending_stride, bgrad);
        for (size_t c = 0; c < nc; ++c) {
          g[c * 3] += cfg.alpha * bgrad[c].x;
          g[c * 3 + 1] += cfg.alpha * bgrad[c].y;
          g[c * 3 + 2] += cfg.alpha * bgrad[c].z;
        }
      }
    };
    auto fd_gradient = [&](const std::vector<double> &q,
                           std::vector<double> &g) {
      g.assign(q.size(), 0.0);
      std::vector<double> qq = q;
      const double h = 1e-4;
      for (size_t a = 0; a < q.size(); ++a) {
        qq[a] = q[a] + h;
        const double fp_ = objective(qq);
        qq[a] = q[a] - h;
        const double fm = objective(qq);
        qq[a] = q[a];
        g[a] = (fp_ - fm) / (2.0 * h);
      }
    };

    bool level_ok;
    if (cfg.fd_gradient)
      level_ok = descend(p, objective, fd_gradient, cfg.bspline_iterations,
                         cfg.tolerance);
    else
      level_ok = descend(p, objective, gradient, cfg.bspline_iterations,
                         cfg.tolerance);
    if (level == 0)
      converged = level_ok;
  }

  for (size_t c = 0; c < nc; ++c)
    spline.coeff[c] = {p[c * 3], p[c * 3 + 1], p[c * 3 + 2]};

  // Export the composed map phi(x) = to_moving_voxel(A(y + u(y))) as a
  // voxel-unit displacement on the full-resolution fixed grid.
  BSplineResult out;
  out.transform = spline;
  out.converged = converged;
  out.field = DisplacementField::zero(fixed);
  const AffineMap post = moving.world_to_voxel().compose(aff);
  size_t idx = 0;
  for (int k = 0; k < fixed.dim[2]; ++k)
    for (int j = 0; j < fixed.dim[1]; ++j)
      for (int i = 0; i < fixed.dim[0]; ++i, ++idx) {
        const Vec3 x{double(i), double(j), double(k)};
        const Vec3 y = fixed.voxel_to_world(x);
        const Vec3 phi = post.apply(y + spline.displacement(y));
        out.field.v[idx] = phi - x;
      }
  out.field.validate();
  return out;
}

Volume warp(const Volume &moving, const DisplacementField &field) {
  std::vector<double> data(field.size());
  size_t idx = 0;
  for (int k = 0; k < field.dim[2]; ++k)
    for (int j = 0; j < field.dim[1]; ++j)
      for (int i = 0; i < field.dim[0]; ++i, ++idx) {
        const Vec3 &d = field.v[idx];
        data[idx] = sample_trilinear(
            moving, {double(i) + d.x, double(j) + d.y, double(k) + d.z});
      }
  return Volume::make(field.dim, field.spacing, field.affine, std::move(data));
}

Volume warp(const Volume &moving, const AffineTransform &t,
            const Volume &fixed_geometry) {
  const AffineMap full = moving.world_to_voxel().compose(t.map()).compose(
      fixed_geometry.affine);
  std::vector<double> data(fixed_geometry.size());
  size_t idx = 0;
  for (int k = 0; k < fixed_geometry.dim[2]; ++k)
    for (int j = 0; j < fixed_geometry.dim[1]; ++j)
      for (int i = 0; i < fixed_geometry.dim[0]; ++i, ++idx)
        data[idx] =
            sample_trilinear(moving, full.apply({double(i), double(j),
                                                 double(k)}));
  return Volume::make(fixed_geometry.dim, fixed_geometry.spacing,
                      fixed_geometry.affine, std::move(data));
}

namespace {

Vec3 sample_field(const DisplacementField &f, const Vec3 &p) {
  // Per-component trilinear with zero padding, like sample_trilinear.
  const int i0 = int(std::floor(p.x)), j0 = int(std::floor(p.y)),
            k0 = int(std::floor(p.z));
  const double fx = p.x - i0, fy = p.y - j0, fz = p.z - k0;
  Vec3 acc{};
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        const int i = i0 + di, j = j0 + dj, k = k0 + dk;
        if (i < 0 || j < 0 || k < 0 || i >= f.dim[0] || j >= f.dim[1] ||
            k >= f.dim[2])
          continue;
        const double w = (di ? fx : 1 - fx) * (dj ? fy : 1 - fy) *
                         (dk ? fz : 1 - fz);
        acc += f.at(i, j, k) * w;
      }
  return acc;
}

} // namespace

DisplacementField invert_field(const DisplacementField &field,
                               int iterations) {
  field.validate();
  DisplacementField inv = field;
  std::fill(inv.v.begin(), inv.v.end(), Vec3{});
  for (int it = 0; it < iterations; ++it) {
    size_t idx = 0;
    DisplacementField next = inv;
    for (int k = 0; k < field.dim[2]; ++k)
      for (int j = 0; j < field.dim[1]; ++j)
        for (int i = 0; i < field.dim[0]; ++i, ++idx) {
          const Vec3 x{double(i), double(j), double(k)};
          const Vec3 w = inv.v[idx];
          next.v[idx] = sample_field(field, x + w) * -1.0;
        }
    inv.v.swap(next.v);
  }
  return inv;
}

void save_field(const DisplacementField &f, const std::string &basepath) {
  f.validate();
  const char *sfx[3] = {"_vx.nii", "_vy.nii", "_vz.nii"};
  for (int a = 0; a < 3; ++a) {
    std::vector<double> comp(f.size());
    for (size_t i = 0; i < f.size(); ++i)
      comp[i] = f.v[i][a];
    write_nifti(Volume::make(f.dim, f.spacing, f.affine, std::move(comp)),
                basepath + sfx[a]);
  }
}

DisplacementField load_field(const std::string &basepath) {
  const Volume vx = read_nifti(basepath + "_vx.nii");
  const Volume vy = read_nifti(basepath + "_vy.nii");
  const Volume vz = read_nifti(basepath + "_vz.nii");
  if (vx.dim != vy.dim || vx.dim != vz.dim)
    throw IoError(basepath + ": field components disagree on dims");
  DisplacementField f;
  f.dim = vx.dim;
  f.spacing = vx.spacing;
  f.affine = vx.affine;
  f.v.resize(vx.size());
  for (size_t i = 0; i < f.v.size(); ++i)
    f.v[i] = {vx.data[i], vy.data[i], vz.data[i]};
  f.validate();
  return f;
}

namespace {

std::map<std::string, std::string> read_kv(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw IoError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    const size_t sp = line.find(' ');
    if (sp == std::string::npos)
      throw IoError(path + ": malformed line '" + line + "'");
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return kv;
}

double kv_num(const std::map<std::string, std::string> &kv,
              const std::string &key, const std::string &path) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw IoError(path + ": missing key '" + key + "'");
  return std::stod(it->second);
}

} // namespace

void save_affine(const AffineTransform &t, const std::string &path) {
  std::ostringstream os;
  os << "type affine\n";
  os << "converged " << (t.converged ? 1 : 0) << "\n";
  static const char *names[9] = {"m00", "m01", "m02", "m10", "m11",
                                 "m12", "m20", "m21", "m22"};
  for (int i = 0; i < 9; ++i)
    os << names[i] << " " << full_precision(t.matrix.m[size_t(i)]) << "\n";
  os << "tx " << full_precision(t.translation.x) << "\n";
  os << "ty " << full_precision(t.translation.y) << "\n";
  os << "tz " << full_precision(t.translation.z) << "\n";
  write_text_file(path, os.str());
}

AffineTransform load_affine(const std::string &path) {
  const auto kv = read_kv(path);
  if (kv.count("type") == 0 || kv.at("type") != "affine")
    throw IoError(path + ": not an affine transform file");
  AffineTransform t;
  static const char *names[9] = {"m00", "m01", "m02", "m10", "m11",
                                 "m12", "m20", "m21", "m22"};
  for (int i = 0; i < 9; ++i)
    t.matrix.m[size_t(i)] = kv_num(kv, names[i], path);
  t.translation = {kv_num(kv, "tx", path), kv_num(kv, "ty", path),
                   kv_num(kv, "tz", path)};
  t.converged = kv_num(kv, "converged", path) != 0.0;
  return t;
}

void save_bspline(const BSplineTransform &t, const std::string &path) {
  std::ostringstream os;
  os << "type bspline\n";
  os << "dims " << t.dims[0] << " " << t.dims[1] << " " << t.dims[2] << "\n";
  os << "origin " << full_precision(t.origin.x) << " "
     << full_precision(t.origin.y) << " " << full_precision(t.origin.z)
     << "\n";
  os << "spacing " << full_precision(t.spacing.x) << " "
     << full_precision(t.spacing.y) << " " << full_precision(t.spacing.z)
     << "\n";
  for (size_t c = 0; c < t.coeff.size(); ++c)
    os << "c" << c << " " << full_precision(t.coeff[c].x) << " "
       << full_precision(t.coeff[c].y) << " " << full_precision(t.coeff[c].z)
       << "\n";
  write_text_file(path, os.str());
}

BSplineTransform load_bspline(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw IoError("cannot open " + path);
  BSplineTransform t;
  std::string line;
  bool typed = false;
  std::vector<bool> seen;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "type") {
      std::string ty;
      is >> ty;
      if (ty != "bspline")
        throw IoError(path + ": not a bspline transform file");
      typed = true;
    } else if (key == "dims") {
      is >> t.dims[0] >> t.dims[1] >> t.dims[2];
      if (!is || t.dims[0] <= 0 || t.dims[1] <= 0 || t.dims[2] <= 0)
        throw IoError(path + ": bad dims");
      t.coeff.assign(t.size(), Vec3{});
      seen.assign(t.size(), false);
    } else if (key == "origin") {
      is >> t.origin.x >> t.origin.y >> t.origin.z;
    } else if (key == "spacing") {
      is >> t.spacing.x >> t.spacing.y >> t.spacing.z;
    } else if (key.size() > 1 && key[0] == 'c') {
      const size_t c = std::stoul(key.substr(1));
      if (t.coeff.empty() || c >= t.coeff.size())
        throw IoError(path + ": coefficient index out of range");
      is >> t.coeff[c].x >> t.coeff[c].y >> t.coeff[c].z;
      seen[c] = true;
    } else {
      throw IoError(path + ": unknown key '" + key + "'");
    }
    if (!is)
      throw IoError(path + ": malformed line '" + line + "'");
  }
  if (!typed || t.coeff.empty())
    throw IoError(path + ": incomplete bspline transform");
  for (size_t c = 0; c < seen.size(); ++c)
    if (!seen[c])
      throw IoError(path + ": missing coefficient c" + std::to_string(c));
  return t;
}

} // namespace jmorph
