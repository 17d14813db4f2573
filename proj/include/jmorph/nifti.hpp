#pragma once

#include "jmorph/volume.hpp"

#include <string>

namespace jmorph {

// Single-file NIfTI-1 subset: 348-byte header, magic "n+1\0", datatype 16
// (float32), dim[0]=3, vox_offset 352, little-endian, no extensions. Writer
// always emits this shape; reader rejects anything else with an error naming
// the offending header field.
Volume read_nifti(const std::string &path);
void write_nifti(const Volume &v, const std::string &path);

// Labels travel as float32 voxels holding exact small integers. The reader
// rejects values that are not non-negative integers. Names are not stored in
// the file; callers reattach them.
LabelVolume read_label_nifti(const std::string &path,
                             std::map<uint32_t, std::string> names = {});
void write_label_nifti(const LabelVolume &lv, const std::string &path);

// Raw debugging sidecar: 3 u32 dims, 3 f64 spacings, f64 payload. No affine
// (identity direction at the origin is assumed on read).
Volume read_rvol(const std::string &path);
void write_rvol(const Volume &v, const std::string &path);

} // namespace jmorph
