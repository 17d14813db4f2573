#pragma once

#include "jmorph/registration.hpp"
#include "jmorph/volume.hpp"

#include <string>

namespace jmorph {

// Per-voxel volume-change classes. Values match the on-disk label encoding.
enum class VolumeChange : uint32_t { compression = 0, nochange = 1, expansion = 2 };

struct JacobianConfig {
  double tau = 1e-3;       // |det - 1| <= tau counts as no change
  double clamp_eps = 1e-6; // logdet = ln(max(det, clamp_eps))

  void validate() const; // throws ConfigError
};

// Determinant maps derived from a displacement field, all on the field's
// grid. det holds det(dphi/dx) per voxel where phi(x) = x + v(x), so 1
// means no local volume change; logdet is ln of det clamped to clamp_eps
// (folded registrations produce det <= 0, which must not propagate NaNs);
// cls bins det against 1 with tolerance tau.
struct JacobianMap {
  Volume det;
  Volume logdet;
  LabelVolume cls;

  void validate(const JacobianConfig &cfg = {}) const; // throws InvariantError
};

// dv_i/dx_j at one voxel, derivatives in voxel units: central differences
// on the interior, one-sided at faces, zero along any singleton axis.
// det(I + J) is the same in voxel and mm units because the field's value
// and coordinate axes carry the same spacing, so the determinant below
// needs no spacing correction.
Mat3 jacobian_matrix(const DisplacementField &field, int i, int j, int k);

JacobianMap jacobian_map(const DisplacementField &field,
                         const JacobianConfig &cfg = {});

enum class JacobianFeature { det, logdet };

// Feature volume for the classifier: det or logdet standardized to zero
// mean / unit variance over mask voxels (label != 0). Null mask pools every
// voxel. The affine shift applies to all voxels, masked or not; a constant
// pool comes back all zero instead of dividing by zero.
Volume to_model_input(const JacobianMap &map, JacobianFeature mode,
                      const LabelVolume *mask = nullptr);

// basepath + "_det.nii", "_logdet.nii", "_class.nii".
void save_jacobian_map(const JacobianMap &map, const std::string &basepath);
JacobianMap load_jacobian_map(const std::string &basepath);

} // namespace jmorph
