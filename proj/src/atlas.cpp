#include "jmorph/atlas.hpp"

#include "jmorph/errors.hpp"
#include "jmorph/rng.hpp"

#include <cmath>
#include <vector>

namespace jmorph {

const std::map<uint32_t, std::string> &atlas_names() {
  static const std::map<uint32_t, std::string> names = {
      {1, "Frontal-Temporal"}, {2, "Sub-lobar"},      {3, "Temporal Lobe"},
      {4, "Limbic Lobe"},      {5, "Frontal Lobe"},   {6, "Midbrain"},
      {7, "Pons"},             {8, "Parietal Lobe"},  {9, "Posterior Lobe"},
      {10, "Medulla"},         {11, "Anterior Lobe"}, {12, "Occipital Lobe"}};
  return names;
}

// The image is a ball carved into 12 nearest-seed cells, each cell at its
// own base level with radial shading on top. The shading keeps intensity
// gradients alive in cell interiors, which registration similarity needs;
// flat cells would leave it blind away from edges. Labels use the hard ball
// boundary; only the image gets the soft rim and the 1-2-1 smoothing.
MiniTemplate make_mini_template(int n) {
  if (n < 8)
    throw ConfigError("template edge must be at least 8 voxels");
  Rng rng(424242);
  std::vector<Vec3> seeds(12);
  std::vector<double> level(12);
  for (int r = 0; r < 12; ++r) {
    seeds[r] = {2.0 + (n - 5.0) * rng.uniform(),
                2.0 + (n - 5.0) * rng.uniform(),
                2.0 + (n - 5.0) * rng.uniform()};
    level[r] = 0.25 + 0.75 * (r / 11.0);
  }
  std::vector<double> data(size_t(n) * n * n, 0.0);
  std::vector<uint32_t> labels(data.size(), 0);
  const double c = (n - 1) / 2.0, R = 0.45 * n;
  size_t idx = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i, ++idx) {
        const double rr = std::sqrt((i - c) * (i - c) + (j - c) * (j - c) +
                                    (k - c) * (k - c));
        if (rr > R)
          continue;
        int best = 0;
        double bd = 1e300;
        for (int r = 0; r < 12; ++r) {
          const Vec3 d{i - seeds[r].x, j - seeds[r].y, k - seeds[r].z};
          if (d.dot(d) < bd) {
            bd = d.dot(d);
            best = r;
          }
        }
        labels[idx] = uint32_t(best + 1);
        const double edge = 0.5 * (1.0 + std::tanh((R - rr) / 1.5));
        const double sh =
            0.7 + 0.3 * std::cos(std::sqrt(bd) * (2.0 * M_PI / 10.0));
        data[idx] = level[best] * edge * sh;
      }
  auto at = [&](std::vector<double> &v, int i, int j, int k) -> double & {
    return v[(size_t(k) * n + j) * n + i];
  };
  std::vector<double> tmp = data;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 1; i + 1 < n; ++i)
        at(data, i, j, k) = 0.25 * at(tmp, i - 1, j, k) +
                            0.5 * at(tmp, i, j, k) + 0.25 * at(tmp, i + 1, j, k);
  tmp = data;
  for (int k = 0; k < n; ++k)
    for (int j = 1; j + 1 < n; ++j)
      for (int i = 0; i < n; ++i)
        at(data, i, j, k) = 0.25 * at(tmp, i, j - 1, k) +
                            0.5 * at(tmp, i, j, k) + 0.25 * at(tmp, i, j + 1, k);
  tmp = data;
  for (int k = 1; k + 1 < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        at(data, i, j, k) = 0.25 * at(tmp, i, j, k - 1) +
                            0.5 * at(tmp, i, j, k) + 0.25 * at(tmp, i, j, k + 1);
  MiniTemplate t;
  t.image = Volume::make({n, n, n}, {1, 1, 1}, AffineMap{}, std::move(data));
  t.regions = LabelVolume::make({n, n, n}, {1, 1, 1}, AffineMap{},
                                std::move(labels), atlas_names());
  return t;
}

} // namespace jmorph
