#include "jmorph/report.hpp"

#include "jmorph/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace jmorph {

namespace {

void sort_and_rank(RegionReport &r) {
  std::sort(r.rows.begin(), r.rows.end(),
            [](const RegionRow &a, const RegionRow &b) {
              if (a.mean != b.mean)
                return a.mean > b.mean;
              return a.label < b.label;
            });
  for (size_t i = 0; i < r.rows.size(); ++i)
    r.rows[i].rank = int(i) + 1;
}

std::string fmt(const char *pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

} // namespace

RegionReport region_rank(const Volume &heatmap, const LabelVolume &atlas,
                         bool include_background) {
  heatmap.validate();
  atlas.validate();
  if (heatmap.dim != atlas.dim)
    throw InvariantError("heatmap and atlas grids differ");

  std::map<uint32_t, RegionRow> rows;
  for (const auto &[label, name] : atlas.names)
    rows[label] = RegionRow{label, name, 0.0, 0, 0, true};
  if (include_background)
    rows[0] = RegionRow{0, "Background", 0.0, 0, 0, true};

  for (size_t i = 0; i < atlas.labels.size(); ++i) {
    auto it = rows.find(atlas.labels[i]);
    if (it == rows.end())
      continue; // background by default
    it->second.mean += heatmap.data[i];
    it->second.voxels++;
  }

  RegionReport out;
  for (auto &[label, row] : rows) {
    if (row.voxels > 0) {
      row.mean /= double(row.voxels);
      row.empty = false;
    }
    out.rows.push_back(row);
  }
  sort_and_rank(out);
  return out;
}

RegionReport aggregate_reports(const std::vector<RegionReport> &subjects) {
  if (subjects.empty())
    throw ConfigError("nothing to aggregate");

  // region sets must agree; accumulate by label
  std::map<uint32_t, RegionRow> acc;
  for (const RegionRow &row : subjects[0].rows) {
    RegionRow r = row;
    r.mean = 0;
    r.rank = 0;
    acc[row.label] = r;
  }
  for (const RegionReport &rep : subjects) {
    if (rep.rows.size() != acc.size())
      throw InvariantError("region reports cover different atlases");
    for (const RegionRow &row : rep.rows) {
      auto it = acc.find(row.label);
      if (it == acc.end() || it->second.name != row.name)
        throw InvariantError("region reports cover different atlases");
      it->second.mean += row.mean;
    }
  }

  RegionReport out;
  out.class_index = subjects[0].class_index;
  for (auto &[label, row] : acc) {
    row.mean /= double(subjects.size());
    out.rows.push_back(row);
  }
  sort_and_rank(out);
  return out;
}

std::string render_region_table(const std::vector<RegionReport> &per_class,
                                const std::vector<std::string> &class_names) {
  if (per_class.empty() || per_class.size() != class_names.size())
    throw ConfigError("one class name per report required");
  const size_t rows = per_class[0].rows.size();
  for (const RegionReport &r : per_class)
    if (r.rows.size() != rows)
      throw InvariantError("region reports cover different atlases");

  std::string t = "|";
  for (const std::string &c : class_names)
    t += " " + c + " |";
  t += "\n|";
  for (size_t i = 0; i < class_names.size(); ++i)
    t += " --- |";
  t += "\n";
  bool any_empty = false;
  for (size_t i = 0; i < rows; ++i) {
    t += "|";
    for (const RegionReport &r : per_class) {
      const RegionRow &row = r.rows[i];
      t += " " + row.name + " (" + fmt("%.2f", row.mean) + ")";
      if (row.empty) {
        t += "*";
        any_empty = true;
      }
      t += " |";
    }
    t += "\n";
  }
  if (any_empty)
    t += "\n\\* region has no voxels in the atlas\n";
  return t;
}

std::string region_report_csv(const RegionReport &report) {
  std::string t = "rank,label,region,mean,voxels\n";
  for (const RegionRow &r : report.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%u,%s,%.9g,%ld\n", r.rank, r.label,
                  r.name.c_str(), r.mean, r.voxels);
    t += line;
  }
  return t;
}

std::string render_ablation_table(const std::vector<ArmResult> &arms) {
  if (arms.empty())
    throw ConfigError("no arms to report");
  static const char *kClass[4] = {"CN", "MCI", "MLD", "MOD"};
  std::string t = "| Arm |";
  for (const char *m : {"Acc", "Prec", "Rec"})
    for (const char *c : kClass)
      t += std::string(" ") + m + " " + c + " |";
  t += "\n|";
  for (int i = 0; i < 13; ++i)
    t += " --- |";
  t += "\n";
  for (const ArmResult &arm : arms) {
    t += "| " + arm.name + " |";
    const Metrics &m = arm.metrics;
    for (const auto &field : {m.accuracy, m.precision, m.recall})
      for (int c = 0; c < 4; ++c)
        t += " " + fmt("%.1f", 100.0 * field[size_t(c)]) + " |";
    t += "\n";
  }
  return t;
}

} // namespace jmorph
