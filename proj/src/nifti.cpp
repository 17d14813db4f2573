#include "jmorph/nifti.hpp"

#include "jmorph/errors.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace jmorph {

namespace {

// On-disk layout of the 348-byte NIfTI-1 header. All fields are naturally
// aligned, so the struct is padding-free; the static_assert guards that.
struct Nifti1Header {
  int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  int32_t extents;
  int16_t session_error;
  char regular;
  char dim_info;
  int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  int16_t intent_code;
  int16_t datatype;
  int16_t bitpix;
  int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  int16_t qform_code;
  int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "header must be 348 bytes");

constexpr int16_t kDatatypeFloat32 = 16;

} // namespace

Volume read_nifti(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open " + path);
  Nifti1Header h{};
  f.read(reinterpret_cast<char *>(&h), sizeof h);
  if (f.gcount() != sizeof h)
    throw IoError(path + ": truncated header (need 348 bytes)");
  if (std::memcmp(h.magic, "n+1", 4) != 0)
    throw IoError(path + ": bad magic (expected n+1 single-file)");
  if (h.sizeof_hdr != 348) {
    if (h.sizeof_hdr == 1543569408)
      throw IoError(path + ": sizeof_hdr is byte-swapped (big-endian "
                           "files are not supported)");
    throw IoError(path + ": sizeof_hdr is " + std::to_string(h.sizeof_hdr) +
                  ", expected 348");
  }
  if (h.dim[0] != 3)
    throw IoError(path + ": dim[0] is " + std::to_string(h.dim[0]) +
                  ", only 3D volumes are supported");
  if (h.datatype != kDatatypeFloat32)
    throw IoError(path + ": unsupported datatype code " +
                  std::to_string(h.datatype) + " (only 16/float32)");
  if (h.bitpix != 32)
    throw IoError(path + ": bitpix is " + std::to_string(h.bitpix) +
                  ", expected 32");
  std::array<int, 3> dim{h.dim[1], h.dim[2], h.dim[3]};
  if (dim[0] <= 0 || dim[1] <= 0 || dim[2] <= 0)
    throw IoError(path + ": non-positive dim");
  Vec3 spacing{double(h.pixdim[1]), double(h.pixdim[2]), double(h.pixdim[3])};
  if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
    throw IoError(path + ": non-positive pixdim");

  AffineMap affine;
  if (h.sform_code > 0) {
    affine.linear = Mat3{{double(h.srow_x[0]), double(h.srow_x[1]),
                          double(h.srow_x[2]), double(h.srow_y[0]),
                          double(h.srow_y[1]), double(h.srow_y[2]),
                          double(h.srow_z[0]), double(h.srow_z[1]),
                          double(h.srow_z[2])}};
    affine.offset = {double(h.srow_x[3]), double(h.srow_y[3]),
                     double(h.srow_z[3])};
  } else {
    affine.linear = Mat3::diag(spacing.x, spacing.y, spacing.z);
    affine.offset = {0.0, 0.0, 0.0};
  }

  const long offset = long(h.vox_offset);
  if (offset < 348)
    throw IoError(path + ": vox_offset " + std::to_string(offset) +
                  " overlaps the header");
  f.seekg(offset, std::ios::beg);
  const size_t n = size_t(dim[0]) * dim[1] * dim[2];
  std::vector<float> raw(n);
  f.read(reinterpret_cast<char *>(raw.data()),
         std::streamsize(n * sizeof(float)));
  if (size_t(f.gcount()) != n * sizeof(float))
    throw IoError(path + ": truncated payload (expected " +
                  std::to_string(n * sizeof(float)) + " data bytes)");
  std::vector<double> data(n);
  for (size_t i = 0; i < n; ++i)
    data[i] = double(raw[i]);
  try {
    return Volume::make(dim, spacing, affine, std::move(data));
  } catch (const InvariantError &e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_nifti(const Volume &v, const std::string &path) {
  v.validate();
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = int16_t(v.dim[0]);
  h.dim[2] = int16_t(v.dim[1]);
  h.dim[3] = int16_t(v.dim[2]);
  for (int i = 4; i < 8; ++i)
    h.dim[i] = 1;
  h.datatype = kDatatypeFloat32;
  h.bitpix = 32;
  h.pixdim[0] = 1.0f;
  h.pixdim[1] = float(v.spacing.x);
  h.pixdim[2] = float(v.spacing.y);
  h.pixdim[3] = float(v.spacing.z);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2; // millimetres
  h.sform_code = 1;
  h.qform_code = 0;
  const Mat3 &A = v.affine.linear;
  h.srow_x[0] = float(A.m[0]);
  h.srow_x[1] = float(A.m[1]);
  h.srow_x[2] = float(A.m[2]);
  h.srow_x[3] = float(v.affine.offset.x);
  h.srow_y[0] = float(A.m[3]);
  h.srow_y[1] = float(A.m[4]);
  h.srow_y[2] = float(A.m[5]);
  h.srow_y[3] = float(v.affine.offset.y);
  h.srow_z[0] = float(A.m[6]);
  h.srow_z[1] = float(A.m[7]);
  h.srow_z[2] = float(A.m[8]);
  h.srow_z[3] = float(v.affine.offset.z);
  std::memcpy(h.magic, "n+1", 4);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char *>(&h), sizeof h);
  const char pad[4] = {0, 0, 0, 0}; // no-extension indicator
  f.write(pad, 4);
  std::vector<float> raw(v.size());
  for (size_t i = 0; i < v.size(); ++i)
    raw[i] = float(v.data[i]);
  f.write(reinterpret_cast<const char *>(raw.data()),
          std::streamsize(raw.size() * sizeof(float)));
  if (!f)
    throw IoError("write failed for " + path);
}

LabelVolume read_label_nifti(const std::string &path,
                             std::map<uint32_t, std::string> names) {
  const Volume v = read_nifti(path);
  std::vector<uint32_t> labels(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    const double r = std::round(v.data[i]);
    if (r < 0.0 || std::abs(v.data[i] - r) > 1e-6)
      throw IoError(path + ": voxel value " + std::to_string(v.data[i]) +
                    " is not a non-negative integer label");
    labels[i] = uint32_t(r);
  }
  if (names.empty())
    for (uint32_t l : labels)
      if (l != 0 && !names.count(l))
        names[l] = "region-" + std::to_string(l);
  return LabelVolume::make(v.dim, v.spacing, v.affine, std::move(labels),
                           std::move(names));
}

void write_label_nifti(const LabelVolume &lv, const std::string &path) {
  lv.validate();
  std::vector<double> data(lv.size());
  for (size_t i = 0; i < lv.size(); ++i)
    data[i] = double(lv.labels[i]);
  write_nifti(Volume::make(lv.dim, lv.spacing, lv.affine, std::move(data)),
              path);
}

Volume read_rvol(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open " + path);
  uint32_t dims[3];
  double sp[3];
  f.read(reinterpret_cast<char *>(dims), sizeof dims);
  f.read(reinterpret_cast<char *>(sp), sizeof sp);
  if (!f)
    throw IoError(path + ": truncated rvol header");
  const std::array<int, 3> dim{int(dims[0]), int(dims[1]), int(dims[2])};
  if (dim[0] <= 0 || dim[1] <= 0 || dim[2] <= 0)
    throw IoError(path + ": non-positive rvol dims");
  const size_t n = size_t(dim[0]) * dim[1] * dim[2];
  std::vector<double> data(n);
  f.read(reinterpret_cast<char *>(data.data()), std::streamsize(n * 8));
  if (size_t(f.gcount()) != n * 8)
    throw IoError(path + ": truncated rvol payload");
  AffineMap a;
  a.linear = Mat3::diag(sp[0], sp[1], sp[2]);
  a.offset = {0.0, 0.0, 0.0};
  return Volume::make(dim, {sp[0], sp[1], sp[2]}, a, std::move(data));
}

void write_rvol(const Volume &v, const std::string &path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw IoError("cannot write " + path);
  const uint32_t dims[3] = {uint32_t(v.dim[0]), uint32_t(v.dim[1]),
                            uint32_t(v.dim[2])};
  const double sp[3] = {v.spacing.x, v.spacing.y, v.spacing.z};
  f.write(reinterpret_cast<const char *>(dims), sizeof dims);
  f.write(reinterpret_cast<const char *>(sp), sizeof sp);
  f.write(reinterpret_cast<const char *>(v.data.data()),
          std::streamsize(v.data.size() * 8));
  if (!f)
    throw IoError("write failed for " + path);
}

} // namespace jmorph
