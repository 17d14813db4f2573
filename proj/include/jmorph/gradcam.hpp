#pragma once

#include "jmorph/model.hpp"
#include "jmorph/volume.hpp"

#include <array>
#include <vector>

namespace jmorph {

// Class-discriminative saliency volume on the model-input grid.
struct Heatmap {
  Volume map;          // values in [0, 1]
  int class_index = 0;
  int block = 0;       // conv block the activations were read from
};

// Convention for reading saliency "after the 3rd conv block", falling back
// to the last block on shallower nets.
int default_cam_block(const ModelConfig &cfg);

// Raw class activation map at feature resolution, before upsampling and
// normalization: relu(sum_u lambda_u A_u) where A are the block's
// post-activation features and lambda_u is the spatial mean of d logit_C /
// d A_u. Input is a single sample (1, C, D, H, W); the result is (d, h, w)
// at the block's resolution. Weights are left untouched, parameter grads
// are scratch.
Tensor cam_features(Model &model, const Tensor &input, int class_index,
                    int block);

// Clamped trilinear resize of an x-fastest (d, h, w) grid onto (D, H, W).
// Constant cells copy through exactly, so constant grids stay constant and
// same-size resizes are bitwise identities.
std::vector<double> upsample_trilinear(const std::vector<double> &src,
                                       std::array<int, 3> from,
                                       std::array<int, 3> to);

// In-place min-max map to [0, 1]. Constant input collapses to all zeros
// when the value is zero and to all ones otherwise; already-normalized
// input (min 0, max 1) passes through bitwise.
void normalize_unit(std::vector<double> &v);

// The full saliency pass: cam_features, upsample to the model input dims,
// normalize. `geometry` stamps the output grid (dims must equal the model
// input dims); pass the registered volume or Jacobian map the sample was
// built from so overlays and atlas lookups line up.
Heatmap grad_cam_3d(Model &model, const Tensor &input, int class_index,
                    int block, const Volume &geometry);

} // namespace jmorph
