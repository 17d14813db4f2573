#include "jmorph/render.hpp"

#include "jmorph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace jmorph {

namespace {

void write_pnm(const std::string &path, const char *magic, int width,
               int height, int channels, const std::vector<uint8_t> &px) {
  if (width < 1 || height < 1 ||
      px.size() != size_t(width) * size_t(height) * size_t(channels))
    throw InvariantError("image buffer does not match its dims");
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot write " + path);
  f << magic << "\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char *>(px.data()),
          std::streamsize(px.size()));
  if (!f)
    throw IoError("short write on " + path);
}

} // namespace

void write_pgm(const std::string &path, int width, int height,
               const std::vector<uint8_t> &gray) {
  write_pnm(path, "P5", width, height, 1, gray);
}

void write_ppm(const std::string &path, int width, int height,
               const std::vector<uint8_t> &rgb) {
  write_pnm(path, "P6", width, height, 3, rgb);
}

SliceImage render_slice(const Volume &base, const Volume &heat, int axis,
                        int index) {
  base.validate();
  heat.validate();
  if (base.dim != heat.dim)
    throw InvariantError("heatmap grid does not match the volume");
  if (axis < 0 || axis > 2)
    throw ConfigError("slice axis must be 0, 1 or 2");
  if (index < 0 || index >= base.dim[size_t(axis)])
    throw ConfigError("slice index " + std::to_string(index) +
                      " outside axis of length " +
                      std::to_string(base.dim[size_t(axis)]));

  const auto [lo, hi] =
      std::minmax_element(base.data.begin(), base.data.end());
  const double mn = *lo, span = *hi - *lo;

  // view conventions: axis 0 -> (D, H), axis 1 -> (W, D), axis 2 -> (W, H)
  SliceImage img;
  switch (axis) {
  case 0:
    img.width = base.dim[2];
    img.height = base.dim[1];
    break;
  case 1:
    img.width = base.dim[0];
    img.height = base.dim[2];
    break;
  default:
    img.width = base.dim[0];
    img.height = base.dim[1];
  }
  img.gray.resize(size_t(img.width) * img.height);
  img.rgb.resize(img.gray.size() * 3);

  auto voxel = [&](int col, int row, int axis_, int idx) -> size_t {
    switch (axis_) {
    case 0:
      return base.index(idx, row, col);
    case 1:
      return base.index(col, idx, row);
    default:
      return base.index(col, row, idx);
    }
  };

  for (int row = 0; row < img.height; ++row)
    for (int col = 0; col < img.width; ++col) {
      const size_t at = voxel(col, row, axis, index);
      const size_t px = size_t(row) * img.width + size_t(col);
      const double v = span > 0 ? (base.data[at] - mn) / span : 0.0;
      const auto g = uint8_t(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      img.gray[px] = g;
      const double h = std::clamp(heat.data[at], 0.0, 1.0);
      // blend toward an orange ramp with the heat value as alpha
      const double hr = 255.0, hg = 170.0 * h, hb = 0.0;
      img.rgb[px * 3 + 0] =
          uint8_t(std::lround((1.0 - h) * g + h * hr));
      img.rgb[px * 3 + 1] =
          uint8_t(std::lround((1.0 - h) * g + h * hg));
      img.rgb[px * 3 + 2] =
          uint8_t(std::lround((1.0 - h) * g + h * hb));
    }
  return img;
}

std::vector<std::string> overlay_slices(const Volume &base, const Volume &heat,
                                        int axis,
                                        const std::vector<int> &indices,
                                        const std::string &prefix) {
  std::vector<std::string> written;
  for (int idx : indices) {
    SliceImage img = render_slice(base, heat, axis, idx);
    const std::string stem =
        prefix + "_a" + std::to_string(axis) + "s" + std::to_string(idx);
    write_pgm(stem + ".pgm", img.width, img.height, img.gray);
    write_ppm(stem + ".ppm", img.width, img.height, img.rgb);
    written.push_back(stem + ".pgm");
    written.push_back(stem + ".ppm");
  }
  return written;
}

} // namespace jmorph
