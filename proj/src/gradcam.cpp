#include "jmorph/gradcam.hpp"

#include "jmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace jmorph {

int default_cam_block(const ModelConfig &cfg) {
  return std::min<int>(2, int(cfg.conv_blocks.size()) - 1);
}

Tensor cam_features(Model &model, const Tensor &input, int class_index,
                    int block) {
  input.validate();
  if (input.shape.size() != 5 || input.shape[0] != 1)
    throw InvariantError("saliency expects a single (1,C,D,H,W) sample, got " +
                         shape_str(input.shape));
  if (class_index < 0 || class_index >= model.cfg.num_classes)
    throw ConfigError("class index " + std::to_string(class_index) +
                      " outside 0.." +
                      std::to_string(model.cfg.num_classes - 1));
  if (block < 0 || block >= int(model.cfg.conv_blocks.size()))
    throw ConfigError("conv block " + std::to_string(block) +
                      " is not cached; the model has " +
                      std::to_string(model.cfg.conv_blocks.size()) + " blocks");

  Activations acts;
  model.forward(input, false, acts);
  Tensor dlogits = Tensor::zeros(acts.logits.shape);
  dlogits.val[size_t(class_index)] = 1.0;
  model.zero_grads(); // parameter grads are scratch here
  Tensor dact;
  model.backward(acts, dlogits, nullptr, block, &dact);

  const Tensor &a = acts.act_out[size_t(block)];
  const int u = a.shape[1];
  const size_t plane = a.val.size() / size_t(u);

  Tensor cam = Tensor::zeros({a.shape[2], a.shape[3], a.shape[4]});
  for (int c = 0; c < u; ++c) {
    const double *ga = dact.val.data() + size_t(c) * plane;
    const double *aa = a.val.data() + size_t(c) * plane;
    double lambda = 0;
    for (size_t i = 0; i < plane; ++i)
      lambda += ga[i];
    lambda /= double(plane);
    for (size_t i = 0; i < plane; ++i)
      cam.val[i] += lambda * aa[i];
  }
  for (double &v : cam.val)
    v = std::max(v, 0.0);
  return cam;
}

std::vector<double> upsample_trilinear(const std::vector<double> &src,
                                       std::array<int, 3> from,
                                       std::array<int, 3> to) {
  const int sd = from[0], sh = from[1], sw = from[2];
  const int td = to[0], th = to[1], tw = to[2];
  if (sd < 1 || sh < 1 || sw < 1 || td < 1 || th < 1 || tw < 1 ||
      src.size() != size_t(sd) * sh * sw)
    throw InvariantError("upsample: inconsistent grid dims");

  auto prep = [](int t, int s) {
    // voxel-center mapping; ends clamp so the support never leaves the grid
    std::vector<std::pair<int, double>> m;
    m.resize(size_t(t));
    for (int i = 0; i < t; ++i) {
      double x = (double(i) + 0.5) * double(s) / double(t) - 0.5;
      x = std::clamp(x, 0.0, double(s - 1));
      int lo = std::min(int(x), s - 2 < 0 ? 0 : s - 2);
      double f = s == 1 ? 0.0 : x - double(lo);
      if (f == 1.0) { // land on the node itself, keeps identity resizes exact
        ++lo;
        f = 0.0;
      }
      m[size_t(i)] = {lo, f};
    }
    return m;
  };
  const auto mz = prep(td, sd), my = prep(th, sh), mx = prep(tw, sw);

  std::vector<double> out(size_t(td) * th * tw);
  auto at = [&](int z, int y, int x) {
    return src[(size_t(z) * sh + size_t(y)) * sw + size_t(x)];
  };
  size_t o = 0;
  for (int z = 0; z < td; ++z)
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x, ++o) {
        const auto [z0, fz] = mz[size_t(z)];
        const auto [y0, fy] = my[size_t(y)];
        const auto [x0, fx] = mx[size_t(x)];
        const int z1 = std::min(z0 + 1, sd - 1), y1 = std::min(y0 + 1, sh - 1),
                  x1 = std::min(x0 + 1, sw - 1);
        const double c000 = at(z0, y0, x0), c001 = at(z0, y0, x1),
                     c010 = at(z0, y1, x0), c011 = at(z0, y1, x1),
                     c100 = at(z1, y0, x0), c101 = at(z1, y0, x1),
                     c110 = at(z1, y1, x0), c111 = at(z1, y1, x1);
        // the a + (b - a) * f form is exact whenever a == b, so constant
        // cells copy through bitwise
        const double e00 = c000 + (c001 - c000) * fx;
        const double e01 = c010 + (c011 - c010) * fx;
        const double e10 = c100 + (c101 - c100) * fx;
        const double e11 = c110 + (c111 - c110) * fx;
        const double f0 = e00 + (e01 - e00) * fy;
        const double f1 = e10 + (e11 - e10) * fy;
        out[o] = f0 + (f1 - f0) * fz;
      }
  return out;
}

void normalize_unit(std::vector<double> &v) {
  if (v.empty())
    return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, mx = *hi;
  if (mx == mn) {
    std::fill(v.begin(), v.end(), mx == 0.0 ? 0.0 : 1.0);
    return;
  }
  if (mn == 0.0 && mx == 1.0)
    return; // already normalized, keep bits
  const double span = mx - mn;
  for (double &x : v)
    x = (x - mn) / span;
}

Heatmap grad_cam_3d(Model &model, const Tensor &input, int class_index,
                    int block, const Volume &geometry) {
  Tensor cam = cam_features(model, input, class_index, block);
  const std::array<int, 3> in{model.cfg.input_dim[0], model.cfg.input_dim[1],
                              model.cfg.input_dim[2]};
  if (geometry.dim[0] != in[2] || geometry.dim[1] != in[1] ||
      geometry.dim[2] != in[0])
    throw InvariantError("heatmap geometry dims do not match the model input");
  std::vector<double> up = upsample_trilinear(
      cam.val, {cam.shape[0], cam.shape[1], cam.shape[2]}, in);
  normalize_unit(up);
  Heatmap h;
  h.map = Volume::make(geometry.dim, geometry.spacing, geometry.affine,
                       std::move(up));
  h.class_index = class_index;
  h.block = block;
  return h;
}

} // namespace jmorph
