#pragma once

#include "jmorph/phantom.hpp"
#include "jmorph/volume.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace jmorph {

enum class ClassLabel : int { CN = 0, MCI = 1, MLD = 2, MOD = 3 };

// 0 -> CN, 0.5 -> MCI, 1 -> MLD, 2 and 3 merge into MOD. Throws ConfigError
// on anything else. The cut points live here only, so remapping is a one
// line change.
ClassLabel cdr_to_class(double cdr);
const char *class_name(ClassLabel c);

struct Scan {
  std::string modality; // "mri" or "ct"
  std::string path;     // relative to the manifest's directory
};

struct Subject {
  std::string id;
  double cdr = 0.0;
  std::vector<Scan> scans;
};

struct Manifest {
  std::vector<Subject> subjects;

  void validate() const; // unique ids, >= 1 scan, known cdr and modality
};

Manifest read_manifest(const std::string &path);
void write_manifest(const Manifest &m, const std::string &path);

// Classifier input: channel-stacked volume(s) plus provenance.
struct Sample {
  std::vector<double> input;     // shape[0] * ... * shape[3] values
  std::array<int, 4> shape{0, 0, 0, 0}; // C, D, H, W
  ClassLabel label = ClassLabel::CN;
  std::string subject_id;
  bool synthetic = false;
};

// One raw channel, no standardization; label and subject_id left for the
// caller.
Sample single_channel(const Volume &v);

// Two channels in the order [mri, ct], each standardized to zero mean /
// unit variance on its own. Dims must agree.
Sample fuse_early(const Volume &mri, const Volume &ct);

// Subject-granularity partitions: every scan of a subject lands on one side.
std::pair<Manifest, Manifest> split_by_subject(const Manifest &m,
                                               double test_fraction,
                                               uint64_t seed);
std::vector<Manifest> kfold(const Manifest &m, int k, uint64_t seed);

// Upsamples every minority class to the majority count with interpolated
// samples x + lambda (x_nn - x), lambda ~ U(0,1), x_nn among the k nearest
// same-class neighbours in flattened Euclidean distance. Originals come
// back unmodified, in order, with synthetics appended. Meant for training
// folds only, after splitting, so nothing synthetic leaks into evaluation.
std::vector<Sample> smote_balance(const std::vector<Sample> &samples,
                                  int k_neighbors, uint64_t seed);

// Default corpus: per_class subjects per class, graded atrophy factors so
// the classes differ by volume change only. Writes <root>/<subject>/
// {mri,ct,labels}.nii plus the ground-truth field, the shared template and
// atlas, and <root>/manifest.json; returns the manifest.
struct CorpusConfig {
  std::string root;
  int per_class = 12;
  std::array<double, 4> atrophy_factors{1.0, 0.92, 0.85, 0.75};
  double noise_sigma = 0.02;
  uint64_t seed = 0;
  int edge = 32;

  void validate() const;
};

Manifest generate_corpus(const CorpusConfig &cfg);

} // namespace jmorph
