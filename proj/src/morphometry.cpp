#include "jmorph/morphometry.hpp"

#include "jmorph/errors.hpp"
#include "jmorph/nifti.hpp"
#include "jmorph/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace jmorph {

namespace {

const std::map<uint32_t, std::string> &class_names() {
  static const std::map<uint32_t, std::string> names = {
      {0, "compression"}, {1, "nochange"}, {2, "expansion"}};
  return names;
}

uint32_t classify(double det, double tau) {
  if (std::abs(det - 1.0) <= tau)
    return uint32_t(VolumeChange::nochange);
  return det > 1.0 ? uint32_t(VolumeChange::expansion)
                   : uint32_t(VolumeChange::compression);
}

} // namespace

void JacobianConfig::validate() const {
  if (!(tau >= 0.0))
    throw ConfigError("jacobian tau must be >= 0");
  if (!(clamp_eps > 0.0))
    throw ConfigError("jacobian clamp_eps must be > 0");
}

void JacobianMap::validate(const JacobianConfig &cfg) const {
  cfg.validate();
  det.validate();
  logdet.validate();
  cls.validate();
  if (logdet.dim != det.dim || cls.dim != det.dim)
    throw InvariantError("jacobian map components disagree on grid size");
  for (size_t t = 0; t < det.data.size(); ++t) {
    double d = det.data[t];
    double ld = std::log(std::max(d, cfg.clamp_eps));
    // slack absorbs the float32 voxel quantization of a file round trip
    if (std::abs(logdet.data[t] - ld) > 1e-6 * std::max(1.0, std::abs(ld)))
      throw InvariantError("logdet does not equal log of clamped det");
    if (cls.labels[t] != classify(d, cfg.tau))
      throw InvariantError("class labels disagree with det thresholds");
  }
}

Mat3 jacobian_matrix(const DisplacementField &field, int i, int j, int k) {
  Mat3 J; // zero
  const int p[3] = {i, j, k};
  for (int a = 0; a < 3; ++a) {
    if (field.dim[a] < 2)
      continue; // derivative along a singleton axis is taken as zero
    int lo[3] = {i, j, k}, hi[3] = {i, j, k};
    lo[a] = std::max(p[a] - 1, 0);
    hi[a] = std::min(p[a] + 1, field.dim[a] - 1);
    const Vec3 &vh = field.at(hi[0], hi[1], hi[2]);
    const Vec3 &vl = field.at(lo[0], lo[1], lo[2]);
    double inv = 1.0 / double(hi[a] - lo[a]);
    J(0, a) = (vh.x - vl.x) * inv;
    J(1, a) = (vh.y - vl.y) * inv;
    J(2, a) = (vh.z - vl.z) * inv;
  }
  return J;
}

JacobianMap jacobian_map(const DisplacementField &field,
                         const JacobianConfig &cfg) {
  cfg.validate();
  field.validate();
  const std::array<int, 3> dim = field.dim;
  std::vector<double> det(field.size());
  std::vector<double> logdet(field.size());
  std::vector<uint32_t> cls(field.size());
  parallel_for(dim[2], [&](int64_t k) {
    for (int j = 0; j < dim[1]; ++j)
      for (int i = 0; i < dim[0]; ++i) {
        Mat3 J = jacobian_matrix(field, i, j, int(k));
        for (int a = 0; a < 3; ++a)
          J(a, a) += 1.0; // determinant of phi = x + v, not of v
        double d = J.det();
        size_t t = field.index(i, j, int(k));
        det[t] = d;
        logdet[t] = std::log(std::max(d, cfg.clamp_eps));
        cls[t] = classify(d, cfg.tau);
      }
  });
  JacobianMap out;
  out.det = Volume::make(dim, field.spacing, field.affine, std::move(det));
  out.logdet =
      Volume::make(dim, field.spacing, field.affine, std::move(logdet));
  out.cls = LabelVolume::make(dim, field.spacing, field.affine, std::move(cls),
                              class_names());
  return out;
}

Volume to_model_input(const JacobianMap &map, JacobianFeature mode,
                      const LabelVolume *mask) {
  const Volume &src = mode == JacobianFeature::det ? map.det : map.logdet;
  return standardize_over(src, mask);
}

void save_jacobian_map(const JacobianMap &map, const std::string &basepath) {
  write_nifti(map.det, basepath + "_det.nii");
  write_nifti(map.logdet, basepath + "_logdet.nii");
  write_label_nifti(map.cls, basepath + "_class.nii");
}

JacobianMap load_jacobian_map(const std::string &basepath) {
  JacobianMap out;
  out.det = read_nifti(basepath + "_det.nii");
  out.logdet = read_nifti(basepath + "_logdet.nii");
  out.cls = read_label_nifti(basepath + "_class.nii", class_names());
  if (out.logdet.dim != out.det.dim || out.cls.dim != out.det.dim)
    throw IoError("jacobian map files disagree on grid size: " + basepath);
  return out;
}

} // namespace jmorph
