#pragma once

#include "jmorph/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace jmorph {

// 8-bit image buffers for slice exports. Pixels are row major from the top
// left; rgb holds 3 bytes per pixel.
struct SliceImage {
  int width = 0, height = 0;
  std::vector<uint8_t> gray;
  std::vector<uint8_t> rgb;
};

void write_pgm(const std::string &path, int width, int height,
               const std::vector<uint8_t> &gray);
void write_ppm(const std::string &path, int width, int height,
               const std::vector<uint8_t> &rgb);

// One slice through the volume with the heatmap alpha-blended on top.
//
//   axis 0 fixes x: image is (D wide, H tall)
//   axis 1 fixes y: image is (W wide, D tall)
//   axis 2 fixes z: image is (W wide, H tall)
//
// The base image min-max scales the whole volume once so slices stay
// comparable; heat values blend toward an orange ramp with the heat value
// as alpha, so zero heat reproduces the grayscale base byte for byte.
SliceImage render_slice(const Volume &base, const Volume &heat, int axis,
                        int index);

// Writes <prefix>_a<axis>s<index>.pgm (base) and .ppm (blend) per index.
// Returns the written paths in order.
std::vector<std::string> overlay_slices(const Volume &base, const Volume &heat,
                                        int axis,
                                        const std::vector<int> &indices,
                                        const std::string &prefix);

} // namespace jmorph
