#pragma once

#include "jmorph/train.hpp"
#include "jmorph/volume.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace jmorph {

struct RegionRow {
  uint32_t label = 0;
  std::string name;
  double mean = 0;    // mean heatmap intensity over the region's voxels
  long voxels = 0;
  int rank = 0;       // 1-based, assigned after sorting
  bool empty = false; // region absent from the label volume
};

// Rows sorted by mean descending, ties by label ascending; ranks 1..R.
struct RegionReport {
  int class_index = 0;
  std::vector<RegionRow> rows;
};

// Mean heatmap intensity per named atlas region. Background (label 0) only
// participates when include_background is set. Regions without voxels come
// back flagged with mean 0 instead of being dropped, so every report over
// one atlas has the same row set.
RegionReport region_rank(const Volume &heatmap, const LabelVolume &atlas,
                         bool include_background = false);

// Per-region mean of the subject-level means, re-ranked. All reports must
// cover the same region set.
RegionReport aggregate_reports(const std::vector<RegionReport> &subjects);

// Markdown table, one column per class in the given order, cells
// "Name (mean)" by rank. All reports must have equally many rows.
std::string render_region_table(const std::vector<RegionReport> &per_class,
                                const std::vector<std::string> &class_names);

std::string region_report_csv(const RegionReport &report);

// One evaluated arm of a model comparison.
struct ArmResult {
  std::string name; // e.g. "REG" or "JM"
  Metrics metrics;
};

// Markdown table with per-class accuracy / precision / recall percentages,
// one row per arm.
std::string render_ablation_table(const std::vector<ArmResult> &arms);

} // namespace jmorph
