#include "jmorph/volume.hpp"

#include "jmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace jmorph {

namespace {

double q32(double x) { return double(float(x)); }

Vec3 q32(const Vec3 &v) { return {q32(v.x), q32(v.y), q32(v.z)}; }

AffineMap q32(const AffineMap &a) {
  AffineMap out = a;
  for (double &m : out.linear.m)
    m = q32(m);
  out.offset = q32(out.offset);
  return out;
}

} // namespace

Volume Volume::make(std::array<int, 3> dim, Vec3 spacing, AffineMap affine,
                    std::vector<double> data) {
  Volume v;
  v.dim = dim;
  v.spacing = q32(spacing);
  v.affine = q32(affine);
  v.data = std::move(data);
  v.validate();
  return v;
}

Volume Volume::zeros(std::array<int, 3> dim, Vec3 spacing, Vec3 origin) {
  AffineMap a;
  a.linear = Mat3::diag(spacing.x, spacing.y, spacing.z);
  a.offset = origin;
  return make(dim, spacing, a,
              std::vector<double>(size_t(dim[0]) * dim[1] * dim[2], 0.0));
}

void Volume::validate() const {
  if (dim[0] <= 0 || dim[1] <= 0 || dim[2] <= 0)
    throw InvariantError("volume dims must be positive");
  if (data.size() != size())
    throw InvariantError("volume data length does not match dims");
  if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
    throw InvariantError("volume spacing must be strictly positive");
  if (std::abs(affine.linear.det()) < 1e-12)
    throw InvariantError("volume affine is singular");
  for (double v : data)
    if (!std::isfinite(v))
      throw InvariantError("volume contains non-finite values");
}

LabelVolume LabelVolume::make(std::array<int, 3> dim, Vec3 spacing,
                              AffineMap affine, std::vector<uint32_t> labels,
                              std::map<uint32_t, std::string> names) {
  LabelVolume lv;
  lv.dim = dim;
  lv.spacing = q32(spacing);
  lv.affine = q32(affine);
  lv.labels = std::move(labels);
  lv.names = std::move(names);
  lv.validate();
  return lv;
}

void LabelVolume::validate() const {
  if (dim[0] <= 0 || dim[1] <= 0 || dim[2] <= 0)
    throw InvariantError("label volume dims must be positive");
  if (labels.size() != size())
    throw InvariantError("label volume data length does not match dims");
  for (uint32_t l : labels)
    if (l != 0 && !names.count(l))
      throw InvariantError("label " + std::to_string(l) + " has no name");
}

double sample_trilinear(const Volume &v, const Vec3 &p) {
  return sample_trilinear_grad(v, p, nullptr);
}

double sample_trilinear_grad(const Volume &v, const Vec3 &p, Vec3 *grad) {
  const int i0 = int(std::floor(p.x)), j0 = int(std::floor(p.y)),
            k0 = int(std::floor(p.z));
  const double fx = p.x - i0, fy = p.y - j0, fz = p.z - k0;
  double c[2][2][2];
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        const int i = i0 + di, j = j0 + dj, k = k0 + dk;
        c[dk][dj][di] = v.inside(i, j, k) ? v.at(i, j, k) : 0.0;
      }
  // Collapse z, then y, then x; keep the intermediate slopes for the grad.
  double cy[2][2], cx[2];
  for (int dj = 0; dj < 2; ++dj)
    for (int di = 0; di < 2; ++di)
      cy[dj][di] = c[0][dj][di] + fz * (c[1][dj][di] - c[0][dj][di]);
  for (int di = 0; di < 2; ++di)
    cx[di] = cy[0][di] + fy * (cy[1][di] - cy[0][di]);
  const double val = cx[0] + fx * (cx[1] - cx[0]);
  if (grad) {
    grad->x = cx[1] - cx[0];
    double gy[2];
    for (int di = 0; di < 2; ++di)
      gy[di] = cy[1][di] - cy[0][di];
    grad->y = gy[0] + fx * (gy[1] - gy[0]);
    double gz[2][2];
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di)
        gz[dj][di] = c[1][dj][di] - c[0][dj][di];
    const double gz0 = gz[0][0] + fx * (gz[0][1] - gz[0][0]);
    const double gz1 = gz[1][0] + fx * (gz[1][1] - gz[1][0]);
    grad->z = gz0 + fy * (gz1 - gz0);
  }
  return val;
}

Volume resample(const Volume &v, std::array<int, 3> target_dim,
                Vec3 target_spacing) {
  if (target_dim[0] <= 0 || target_dim[1] <= 0 || target_dim[2] <= 0 ||
      !(target_spacing.x > 0.0) || !(target_spacing.y > 0.0) ||
      !(target_spacing.z > 0.0))
    throw InvariantError("resample target dims/spacing must be positive");
  // Direction cosines preserved; low extent corner held fixed.
  const Mat3 dir = v.affine.linear *
                   Mat3::diag(1.0 / v.spacing.x, 1.0 / v.spacing.y,
                              1.0 / v.spacing.z);
  AffineMap out_affine;
  out_affine.linear =
      dir * Mat3::diag(target_spacing.x, target_spacing.y, target_spacing.z);
  // Corner fixed means t' - 0.5 A' 1 = t - 0.5 A 1.
  const Vec3 half{0.5, 0.5, 0.5};
  out_affine.offset =
      v.affine.offset - v.affine.linear * half + out_affine.linear * half;

  const AffineMap to_src = v.world_to_voxel();
  std::vector<double> data(size_t(target_dim[0]) * target_dim[1] *
                           target_dim[2]);
  size_t n = 0;
  for (int k = 0; k < target_dim[2]; ++k)
    for (int j = 0; j < target_dim[1]; ++j)
      for (int i = 0; i < target_dim[0]; ++i) {
        const Vec3 w = out_affine.apply({double(i), double(j), double(k)});
        data[n++] = sample_trilinear(v, to_src.apply(w));
      }
  return Volume::make(target_dim, target_spacing, out_affine, std::move(data));
}

Volume normalize_intensity(const Volume &v) {
  std::vector<double> sorted = v.data;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  auto rank = [&](double q) {
    size_t r = size_t(std::ceil(q * double(n)));
    return sorted[std::min(std::max<size_t>(r, 1), n) - 1];
  };
  const double lo = rank(0.01), hi = rank(0.99);
  std::vector<double> out(n);
  if (!(hi > lo)) {
    // Degenerate (constant or near-constant): all zeros by convention.
    return Volume::make(v.dim, v.spacing, v.affine, std::move(out));
  }
  for (size_t i = 0; i < n; ++i) {
    const double c = std::clamp(v.data[i], lo, hi);
    out[i] = (c - lo) / (hi - lo);
  }
  return Volume::make(v.dim, v.spacing, v.affine, std::move(out));
}

namespace {

double otsu_threshold(const std::vector<double> &values, double vmin,
                      double vmax) {
  constexpr int bins = 256;
  std::vector<double> hist(bins, 0.0);
  const double scale = double(bins) / (vmax - vmin);
  for (double v : values) {
    int b = int((v - vmin) * scale);
    hist[std::clamp(b, 0, bins - 1)] += 1.0;
  }
  const double total = double(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < bins; ++b)
    sum_all += b * hist[b];
  double w0 = 0.0, sum0 = 0.0, best_var = -1.0;
  int best_bin = 0;
  for (int b = 0; b < bins - 1; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 <= 0.0 || w1 <= 0.0)
      continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double var = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (var > best_var) {
      best_var = var;
      best_bin = b;
    }
  }
  if (best_var < 0.0)
    return vmax; // single occupied bin: nothing passes the threshold
  return vmin + (best_bin + 1) * (vmax - vmin) / bins;
}

} // namespace

std::pair<Volume, LabelVolume> mask_brain(const Volume &v,
                                          double threshold_fraction) {
  const auto [mn_it, mx_it] = std::minmax_element(v.data.begin(), v.data.end());
  const double vmin = *mn_it, vmax = *mx_it;
  std::vector<uint32_t> mask(v.size(), 0);
  if (vmax > vmin) {
    const double thr = threshold_fraction > 0.0
                           ? vmin + threshold_fraction * (vmax - vmin)
                           : otsu_threshold(v.data, vmin, vmax);
    std::vector<uint8_t> fg(v.size());
    for (size_t i = 0; i < v.size(); ++i)
      fg[i] = v.data[i] >= thr ? 1 : 0;

    // Largest 6-connected foreground component.
    std::vector<int32_t> comp(v.size(), -1);
    int32_t ncomp = 0;
    size_t best_size = 0;
    int32_t best_comp = -1;
    std::deque<size_t> queue;
    const int W = v.dim[0], H = v.dim[1], D = v.dim[2];
    for (size_t seed = 0; seed < v.size(); ++seed) {
      if (!fg[seed] || comp[seed] >= 0)
        continue;
      const int32_t id = ncomp++;
      size_t count = 0;
      comp[seed] = id;
      queue.push_back(seed);
      while (!queue.empty()) {
        const size_t cur = queue.front();
        queue.pop_front();
        ++count;
        const int i = int(cur % W), j = int((cur / W) % H), k = int(cur / (size_t(W) * H));
        const int ni[6] = {i - 1, i + 1, i, i, i, i};
        const int nj[6] = {j, j, j - 1, j + 1, j, j};
        const int nk[6] = {k, k, k, k, k - 1, k + 1};
        for (int t = 0; t < 6; ++t) {
          if (ni[t] < 0 || nj[t] < 0 || nk[t] < 0 || ni[t] >= W ||
              nj[t] >= H || nk[t] >= D)
            continue;
          const size_t q = v.index(ni[t], nj[t], nk[t]);
          if (fg[q] && comp[q] < 0) {
            comp[q] = id;
            queue.push_back(q);
          }
        }
      }
      if (count > best_size) {
        best_size = count;
        best_comp = id;
      }
    }
    for (size_t i = 0; i < v.size(); ++i)
      mask[i] = (best_comp >= 0 && comp[i] == best_comp) ? 1 : 0;
  }

  std::vector<double> masked(v.size());
  for (size_t i = 0; i < v.size(); ++i)
    masked[i] = mask[i] ? v.data[i] : 0.0;
  std::map<uint32_t, std::string> names;
  names[1] = "brain";
  return {Volume::make(v.dim, v.spacing, v.affine, std::move(masked)),
          LabelVolume::make(v.dim, v.spacing, v.affine, std::move(mask),
                            std::move(names))};
}

Volume standardize_over(const Volume &v, const LabelVolume *mask) {
  v.validate();
  if (mask && mask->dim != v.dim)
    throw InvariantError("standardization mask grid does not match the volume");
  double sum = 0.0;
  size_t n = 0;
  for (size_t t = 0; t < v.data.size(); ++t) {
    if (mask && mask->labels[t] == 0)
      continue;
    sum += v.data[t];
    ++n;
  }
  if (n == 0)
    throw InvariantError("standardization pool is empty");
  double mean = sum / double(n);
  double ss = 0.0;
  for (size_t t = 0; t < v.data.size(); ++t) {
    if (mask && mask->labels[t] == 0)
      continue;
    double d = v.data[t] - mean;
    ss += d * d;
  }
  double var = ss / double(n);
  std::vector<double> out(v.data.size(), 0.0);
  if (var > 1e-24) {
    double inv = 1.0 / std::sqrt(var);
    for (size_t t = 0; t < v.data.size(); ++t)
      out[t] = (v.data[t] - mean) * inv;
  }
  return Volume::make(v.dim, v.spacing, v.affine, std::move(out));
}

} // namespace jmorph
