#include "jmorph/dataset.hpp"

#include "jmorph/errors.hpp"
#include "jmorph/nifti.hpp"
#include "jmorph/rng.hpp"
#include "jmorph/util.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace jmorph {

ClassLabel cdr_to_class(double cdr) {
  if (cdr == 0.0)
    return ClassLabel::CN;
  if (cdr == 0.5)
    return ClassLabel::MCI;
  if (cdr == 1.0)
    return ClassLabel::MLD;
  if (cdr == 2.0 || cdr == 3.0)
    return ClassLabel::MOD;
  throw ConfigError("unknown cdr value " + std::to_string(cdr));
}

const char *class_name(ClassLabel c) {
  switch (c) {
  case ClassLabel::CN:
    return "CN";
  case ClassLabel::MCI:
    return "MCI";
  case ClassLabel::MLD:
    return "MLD";
  case ClassLabel::MOD:
    return "MOD";
  }
  return "?";
}

void Manifest::validate() const {
  std::set<std::string> ids;
  for (const Subject &s : subjects) {
    if (s.id.empty())
      throw InvariantError("manifest subject with empty id");
    if (!ids.insert(s.id).second)
      throw InvariantError("duplicate subject id " + s.id);
    if (s.scans.empty())
      throw InvariantError("subject " + s.id + " has no scans");
    if (!(s.cdr == 0.0 || s.cdr == 0.5 || s.cdr == 1.0 || s.cdr == 2.0 ||
          s.cdr == 3.0))
      throw InvariantError("subject " + s.id + " has unknown cdr");
    for (const Scan &sc : s.scans)
      if (sc.modality != "mri" && sc.modality != "ct")
        throw InvariantError("subject " + s.id + " has unknown modality '" +
                             sc.modality + "'");
  }
}

Manifest read_manifest(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw IoError("cannot open manifest: " + path);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded())
    throw IoError("malformed manifest JSON: " + path);
  if (!j.contains("subjects") || !j["subjects"].is_array())
    throw IoError("manifest missing subjects array: " + path);
  Manifest m;
  for (const json &s : j["subjects"]) {
    if (!s.contains("id") || !s["id"].is_string() || !s.contains("cdr") ||
        !s["cdr"].is_number() || !s.contains("scans") ||
        !s["scans"].is_array())
      throw IoError("manifest subject missing id/cdr/scans: " + path);
    Subject sub;
    sub.id = s["id"].get<std::string>();
    sub.cdr = s["cdr"].get<double>();
    for (const json &sc : s["scans"]) {
      if (!sc.contains("modality") || !sc["modality"].is_string() ||
          !sc.contains("path") || !sc["path"].is_string())
        throw IoError("manifest scan missing modality/path: " + path);
      sub.scans.push_back(
          {sc["modality"].get<std::string>(), sc["path"].get<std::string>()});
    }
    m.subjects.push_back(std::move(sub));
  }
  m.validate();
  return m;
}

void write_manifest(const Manifest &m, const std::string &path) {
  m.validate();
  json j;
  j["subjects"] = json::array();
  for (const Subject &s : m.subjects) {
    json js;
    js["id"] = s.id;
    js["cdr"] = s.cdr;
    js["scans"] = json::array();
    for (const Scan &sc : s.scans)
      js["scans"].push_back({{"modality", sc.modality}, {"path", sc.path}});
    j["subjects"].push_back(std::move(js));
  }
  std::ofstream f(path);
  if (!f)
    throw IoError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
  if (!f)
    throw IoError("short write on manifest: " + path);
}

Sample single_channel(const Volume &v) {
  Sample s;
  s.input = v.data;
  s.shape = {1, v.dim[2], v.dim[1], v.dim[0]};
  return s;
}

Sample fuse_early(const Volume &mri, const Volume &ct) {
  if (mri.dim != ct.dim)
    throw InvariantError("fuse requires matching grids");
  Volume a = standardize_over(mri, nullptr);
  Volume b = standardize_over(ct, nullptr);
  Sample s;
  s.shape = {2, mri.dim[2], mri.dim[1], mri.dim[0]};
  s.input.reserve(2 * a.data.size());
  s.input.insert(s.input.end(), a.data.begin(), a.data.end());
  s.input.insert(s.input.end(), b.data.begin(), b.data.end());
  return s;
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i)
    idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

} // namespace

std::pair<Manifest, Manifest> split_by_subject(const Manifest &m,
                                               double test_fraction,
                                               uint64_t seed) {
  m.validate();
  const size_t n = m.subjects.size();
  if (n < 2)
    throw ConfigError("need at least 2 subjects to split");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must be in (0, 1)");
  size_t ntest = size_t(std::lround(test_fraction * double(n)));
  ntest = std::min(std::max<size_t>(ntest, 1), n - 1);
  std::vector<size_t> idx = shuffled_indices(n, seed);
  std::vector<bool> is_test(n, false);
  for (size_t i = 0; i < ntest; ++i)
    is_test[idx[i]] = true;
  Manifest train, test;
  for (size_t i = 0; i < n; ++i)
    (is_test[i] ? test : train).subjects.push_back(m.subjects[i]);
  return {train, test};
}

std::vector<Manifest> kfold(const Manifest &m, int k, uint64_t seed) {
  m.validate();
  if (k < 2)
    throw ConfigError("k must be >= 2");
  if (m.subjects.size() < size_t(k))
    throw ConfigError("fewer subjects than folds");
  std::vector<size_t> idx = shuffled_indices(m.subjects.size(), seed);
  std::vector<int> fold_of(m.subjects.size());
  for (size_t i = 0; i < idx.size(); ++i)
    fold_of[idx[i]] = int(i % size_t(k));
  std::vector<Manifest> folds;
  folds.resize(size_t(k));
  for (size_t i = 0; i < m.subjects.size(); ++i)
    folds[size_t(fold_of[i])].subjects.push_back(m.subjects[i]);
  return folds;
}

std::vector<Sample> smote_balance(const std::vector<Sample> &samples,
                                  int k_neighbors, uint64_t seed) {
  if (k_neighbors < 1)
    throw ConfigError("smote needs k_neighbors >= 1");
  if (samples.empty())
    return {};
  for (const Sample &s : samples)
    if (s.shape != samples[0].shape || s.input.size() != samples[0].input.size())
      throw InvariantError("smote requires samples of one shape");

  std::map<int, std::vector<size_t>> groups;
  for (size_t i = 0; i < samples.size(); ++i)
    groups[int(samples[i].label)].push_back(i);
  size_t majority = 0;
  for (const auto &g : groups)
    majority = std::max(majority, g.second.size());

  std::vector<Sample> out = samples;
  Rng rng(seed);
  long serial = 0;
  for (const auto &g : groups) {
    const std::vector<size_t> &idxs = g.second;
    if (idxs.size() == majority)
      continue;
    if (idxs.size() < 2)
      throw InvariantError(std::string("class ") +
                           class_name(ClassLabel(g.first)) +
                           " has a single sample; cannot interpolate");
    // pairwise distances once per class; ties break on index order
    const size_t c = idxs.size();
    std::vector<double> d2(c * c, 0.0);
    for (size_t a = 0; a < c; ++a)
      for (size_t b = a + 1; b < c; ++b) {
        const auto &xa = samples[idxs[a]].input;
        const auto &xb = samples[idxs[b]].input;
        double acc = 0.0;
        for (size_t t = 0; t < xa.size(); ++t) {
          double d = xa[t] - xb[t];
          acc += d * d;
        }
        d2[a * c + b] = d2[b * c + a] = acc;
      }
    const size_t kk = std::min<size_t>(size_t(k_neighbors), c - 1);
    for (size_t need = majority - c; need > 0; --need) {
      size_t base = size_t(rng.below(c));
      std::vector<size_t> order;
      order.reserve(c - 1);
      for (size_t b = 0; b < c; ++b)
        if (b != base)
          order.push_back(b);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return d2[base * c + a] < d2[base * c + b];
      });
      size_t pick = order[size_t(rng.below(kk))];
      double lambda = rng.uniform();
      const Sample &x = samples[idxs[base]];
      const Sample &nn = samples[idxs[pick]];
      Sample syn;
      syn.shape = x.shape;
      syn.label = x.label;
      syn.synthetic = true;
      char buf[32];
      std::snprintf(buf, sizeof buf, "-syn%03ld", ++serial);
      syn.subject_id = x.subject_id + buf;
      syn.input.resize(x.input.size());
      for (size_t t = 0; t < x.input.size(); ++t)
        syn.input[t] = x.input[t] + lambda * (nn.input[t] - x.input[t]);
      out.push_back(std::move(syn));
    }
  }
  return out;
}

void CorpusConfig::validate() const {
  if (root.empty())
    throw ConfigError("corpus root directory is empty");
  if (per_class < 1)
    throw ConfigError("corpus needs at least 1 subject per class");
  for (double s : atrophy_factors)
    if (!(s > 0.0 && s <= 1.0))
      throw ConfigError("atrophy factors must be in (0, 1]");
  if (!(noise_sigma >= 0.0))
    throw ConfigError("noise sigma must be >= 0");
  if (edge < 8)
    throw ConfigError("corpus edge must be at least 8 voxels");
}

Manifest generate_corpus(const CorpusConfig &cfg) {
  cfg.validate();
  MiniTemplate t = make_mini_template(cfg.edge);
  fs::create_directories(cfg.root);
  write_nifti(t.image, (fs::path(cfg.root) / "template.nii").string());
  write_label_nifti(t.regions, (fs::path(cfg.root) / "atlas.nii").string());

  static const char *prefix[4] = {"cn", "mci", "mld", "mod"};
  Manifest man;
  std::vector<PhantomSpec> specs;
  for (int c = 0; c < 4; ++c)
    for (int i = 1; i <= cfg.per_class; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "%s%02d", prefix[c], i);
      Subject sub;
      sub.id = id;
      sub.cdr = c == 0   ? 0.0
                : c == 1 ? 0.5
                : c == 2 ? 1.0
                         : (i % 2 ? 2.0 : 3.0); // exercise the 2/3 merge
      sub.scans.push_back({"mri", sub.id + "/mri.nii"});
      sub.scans.push_back({"ct", sub.id + "/ct.nii"});
      man.subjects.push_back(std::move(sub));

      PhantomSpec spec;
      spec.dim = {cfg.edge, cfg.edge, cfg.edge};
      spec.seed = Rng::mix(cfg.seed, uint64_t(c) * 1000 + uint64_t(i));
      spec.atrophy_factor = cfg.atrophy_factors[size_t(c)];
      spec.noise_sigma = cfg.noise_sigma;
      specs.push_back(spec);
      fs::create_directories(fs::path(cfg.root) / id);
    }

  parallel_for(int64_t(specs.size()), [&](int64_t i) {
    Phantom p = generate_phantom(specs[size_t(i)], t);
    fs::path dir = fs::path(cfg.root) / man.subjects[size_t(i)].id;
    write_nifti(p.mri, (dir / "mri.nii").string());
    write_nifti(p.ct, (dir / "ct.nii").string());
    write_label_nifti(p.labels, (dir / "labels.nii").string());
    save_field(p.gt, (dir / "gt").string());
  });

  write_manifest(man, (fs::path(cfg.root) / "manifest.json").string());
  return man;
}

} // namespace jmorph
