#pragma once

#include "jmorph/volume.hpp"

namespace jmorph {

// Built-in synthetic template space: a textured ball at unit spacing carved
// into 12 named regions. Stands in for a population template plus its
// anatomical atlas at desk scale. Pure function of the edge length.
struct MiniTemplate {
  Volume image;        // intensities in [0,1], zero far from the head
  LabelVolume regions; // label 0 background, 1..12 named regions
};

MiniTemplate make_mini_template(int n = 32);

// The 12 region names keyed by nonzero label.
const std::map<uint32_t, std::string> &atlas_names();

} // namespace jmorph
