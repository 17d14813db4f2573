#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "jmorph/atlas.hpp"
#include "jmorph/errors.hpp"
#include "jmorph/gradcam.hpp"
#include "jmorph/nifti.hpp"
#include "jmorph/render.hpp"
#include "jmorph/report.hpp"
#include "jmorph/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

using namespace jmorph;
namespace fs = std::filesystem;

namespace {

// The saliency oracle: one conv with identity kernels feeding a dense layer
// wired as global-average-pool + linear head. For that net the map has the
// closed form relu(sum_u head[c][u] * x_u) / Z computable from the input
// alone, with no reference to the saliency code under test.
struct OracleNet {
  Model model;
  std::vector<std::array<double, 4>> head; // head[u][c]
  int channels, zvox;

  static OracleNet build(int channels, int edge,
                         const std::vector<std::array<double, 4>> &head) {
    ModelConfig cfg;
    cfg.in_channels = channels;
    cfg.input_dim = {edge, edge, edge};
    cfg.conv_blocks = {{channels, false, false, false}};
    cfg.fc = {4};
    cfg.dropout_p = 0.0;
    OracleNet net{Model::create(cfg, 1), head, channels,
                  edge * edge * edge};
    Conv3d &cv = net.model.convs[0];
    std::fill(cv.w.val.begin(), cv.w.val.end(), 0.0);
    std::fill(cv.b.val.begin(), cv.b.val.end(), 0.0);
    for (int c = 0; c < channels; ++c)
      cv.w.val[(size_t(c) * channels + size_t(c)) * 27 + 13] = 1.0; // center tap
    Dense &fc = net.model.fcs[0];
    std::fill(fc.b.val.begin(), fc.b.val.end(), 0.0);
    for (int cls = 0; cls < 4; ++cls)
      for (int u = 0; u < channels; ++u)
        for (int t = 0; t < net.zvox; ++t)
          fc.w.val[size_t(cls) * size_t(fc.in) + size_t(u) * size_t(net.zvox) +
                   size_t(t)] = head[size_t(u)][size_t(cls)] / double(net.zvox);
    return net;
  }

  std::vector<double> closed_form_cam(const Tensor &x, int cls) const {
    std::vector<double> cam(size_t(zvox), 0.0);
    for (int u = 0; u < channels; ++u)
      for (int t = 0; t < zvox; ++t)
        cam[size_t(t)] +=
            head[size_t(u)][size_t(cls)] * x.val[size_t(u) * size_t(zvox) + size_t(t)];
    for (double &v : cam)
      v = std::max(v / double(zvox), 0.0);
    return cam;
  }
};

Tensor random_input(std::vector<int> shape, uint64_t seed) {
  Tensor x = Tensor::zeros(std::move(shape));
  Rng rng(seed);
  for (double &v : x.val)
    v = rng.normal();
  return x;
}

Volume flat_volume(std::array<int, 3> dim, double fill) {
  std::vector<double> d(size_t(dim[0]) * dim[1] * dim[2], fill);
  return Volume::make(dim, {1, 1, 1}, AffineMap::identity(), std::move(d));
}

// minimal PNM reader for checking emitted slices
struct Pnm {
  std::string magic;
  int w = 0, h = 0;
  std::vector<uint8_t> px;
};
Pnm read_pnm(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  Pnm p;
  int maxval;
  f >> p.magic >> p.w >> p.h >> maxval;
  REQUIRE(maxval == 255);
  f.get();
  const int ch = p.magic == "P6" ? 3 : 1;
  p.px.resize(size_t(p.w) * p.h * ch);
  f.read(reinterpret_cast<char *>(p.px.data()), std::streamsize(p.px.size()));
  REQUIRE(bool(f));
  return p;
}

std::string slurp(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path scratch_dir() {
  fs::path p = fs::temp_directory_path() / "jmorph_explain_test";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

} // namespace

TEST_CASE("saliency on the GAP-head oracle net matches its closed form") {
  Rng rng(7);
  std::vector<std::array<double, 4>> head(3);
  for (auto &row : head)
    for (double &v : row)
      v = rng.normal();
  OracleNet net = OracleNet::build(3, 8, head);
  Tensor x = random_input({1, 3, 8, 8, 8}, 9);

  for (int cls = 0; cls < 4; ++cls) {
    Tensor cam = cam_features(net.model, x, cls, 0);
    REQUIRE(cam.shape == std::vector<int>{8, 8, 8});
    std::vector<double> want = net.closed_form_cam(x, cls);
    double worst = 0;
    for (size_t i = 0; i < want.size(); ++i)
      worst = std::max(worst, std::abs(cam.val[i] - want[i]));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("relu wipes the map when all class evidence is negative") {
  // all-positive head row and strictly positive input: the class-0 map is
  // positive everywhere, so the negated head must zero it out entirely
  std::vector<std::array<double, 4>> head(2);
  for (auto &row : head)
    row = {1.0, 0.3, -0.2, 0.1};
  OracleNet pos = OracleNet::build(2, 6, head);
  Tensor x = random_input({1, 2, 6, 6, 6}, 11);
  for (double &v : x.val)
    v = std::abs(v) + 0.1;

  Tensor cam = cam_features(pos.model, x, 0, 0);
  for (double v : cam.val)
    REQUIRE(v > 0.0);

  for (auto &row : head)
    row[0] = -row[0];
  OracleNet neg = OracleNet::build(2, 6, head);
  Tensor flipped = cam_features(neg.model, x, 0, 0);
  for (double v : flipped.val)
    REQUIRE(v == 0.0);
}

TEST_CASE("zero input through a bias-free net yields an all-zero heatmap") {
  std::vector<std::array<double, 4>> head(2, {0.5, -0.5, 1.0, 2.0});
  OracleNet net = OracleNet::build(2, 6, head);
  Tensor x = Tensor::zeros({1, 2, 6, 6, 6});
  Heatmap h = grad_cam_3d(net.model, x, 1, 0, flat_volume({6, 6, 6}, 0.0));
  for (double v : h.map.data)
    REQUIRE(v == 0.0);
}

TEST_CASE("saliency argument errors") {
  std::vector<std::array<double, 4>> head(2, {1.0, 1.0, 1.0, 1.0});
  OracleNet net = OracleNet::build(2, 6, head);
  Tensor x = random_input({1, 2, 6, 6, 6}, 3);
  CHECK_THROWS_AS(cam_features(net.model, x, 4, 0), ConfigError);
  CHECK_THROWS_AS(cam_features(net.model, x, -1, 0), ConfigError);
  CHECK_THROWS_AS(cam_features(net.model, x, 0, 1), ConfigError);
  Tensor batch = random_input({2, 2, 6, 6, 6}, 4);
  CHECK_THROWS_AS(cam_features(net.model, batch, 0, 0), InvariantError);
  CHECK_THROWS_AS(grad_cam_3d(net.model, x, 0, 0, flat_volume({5, 6, 6}, 0.0)),
                  InvariantError);

  ModelConfig five = ModelConfig::baseline(1);
  CHECK(default_cam_block(five) == 2);
  ModelConfig two = five;
  two.conv_blocks.resize(2);
  CHECK(default_cam_block(two) == 1);
  two.conv_blocks.resize(1);
  CHECK(default_cam_block(two) == 0);
}

TEST_CASE("upsampling preserves constants, identity and linear ramps") {
  std::vector<double> constant(5 * 6 * 7, 3.25);
  std::vector<double> up = upsample_trilinear(constant, {5, 6, 7}, {16, 16, 16});
  REQUIRE(up.size() == size_t(16 * 16 * 16));
  for (double v : up)
    REQUIRE(v == 3.25);

  Rng rng(21);
  std::vector<double> noise(4 * 4 * 4);
  for (double &v : noise)
    v = rng.normal();
  CHECK(upsample_trilinear(noise, {4, 4, 4}, {4, 4, 4}) == noise);

  // trilinear reproduces a linear field exactly away from the clamped rim
  std::vector<double> ramp(4 * 4 * 4);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        ramp[size_t((z * 4 + y) * 4 + x)] = z + 2.0 * y + 3.0 * x;
  std::vector<double> up2 = upsample_trilinear(ramp, {4, 4, 4}, {8, 8, 8});
  for (int t : {1, 2, 3, 4, 5, 6}) {
    const double c = t / 2.0 - 0.25;
    const double want = c + 2.0 * c + 3.0 * c;
    CHECK(up2[size_t((t * 8 + t) * 8 + t)] == doctest::Approx(want).epsilon(1e-12));
  }

  CHECK_THROWS_AS(upsample_trilinear(constant, {5, 6, 6}, {8, 8, 8}),
                  InvariantError);
}

TEST_CASE("unit normalization contracts") {
  Rng rng(31);
  std::vector<double> v(257);
  for (double &x : v)
    x = rng.uniform(-3.0, 5.0);
  std::vector<double> keep = v;
  normalize_unit(v);
  const auto [mn, mx] = std::minmax_element(keep.begin(), keep.end());
  for (size_t i = 0; i < v.size(); ++i) {
    CHECK(v[i] >= 0.0);
    CHECK(v[i] <= 1.0);
    CHECK(v[i] == doctest::Approx((keep[i] - *mn) / (*mx - *mn)).epsilon(1e-13));
  }

  // no-op on an already-normalized map, bit for bit
  std::vector<double> unit = v;
  REQUIRE(*std::min_element(unit.begin(), unit.end()) == 0.0);
  REQUIRE(*std::max_element(unit.begin(), unit.end()) == 1.0);
  std::vector<double> copy = unit;
  normalize_unit(unit);
  CHECK(unit == copy);

  // positive scaling changes nothing after normalization
  std::vector<double> scaled = keep;
  for (double &x : scaled)
    x *= 3.5;
  normalize_unit(scaled);
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(scaled[i] == doctest::Approx(v[i]).epsilon(1e-12));

  std::vector<double> zeros(9, 0.0), flat(9, 2.5);
  normalize_unit(zeros);
  normalize_unit(flat);
  for (double x : zeros)
    CHECK(x == 0.0);
  for (double x : flat)
    CHECK(x == 1.0);
}

TEST_CASE("full saliency pass emits a normalized input-shaped volume") {
  ModelConfig cfg;
  cfg.in_channels = 1;
  cfg.input_dim = {8, 8, 8};
  cfg.conv_blocks = {{4, true, true, true}, {3, true, true, false}};
  cfg.fc = {6, 4};
  cfg.dropout_p = 0.5;
  Model m = Model::create(cfg, 17);
  Tensor x = random_input({1, 1, 8, 8, 8}, 19);
  Volume geom = flat_volume({8, 8, 8}, 0.0);

  Heatmap h = grad_cam_3d(m, x, 2, 1, geom);
  CHECK(h.class_index == 2);
  CHECK(h.block == 1);
  CHECK(h.map.dim == std::array<int, 3>{8, 8, 8});
  double mn = 1e300, mx = -1e300;
  for (double v : h.map.data) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  CHECK(mn >= 0.0);
  CHECK(mx <= 1.0);
  // a live map spans the full unit range after min-max scaling
  CHECK(mn == 0.0);
  CHECK(mx == 1.0);

  // saliency is read-only on the weights
  Model m2 = Model::create(cfg, 17);
  auto pa = m.params(), pb = m2.params();
  for (size_t i = 0; i < pa.size(); ++i)
    REQUIRE(pa[i].t->val == pb[i].t->val);
}

TEST_CASE("region means match a brute-force accumulation") {
  MiniTemplate t = make_mini_template(16);
  Rng rng(41);
  std::vector<double> heat(t.regions.size());
  for (double &v : heat)
    v = rng.uniform();
  Volume hv = Volume::make(t.regions.dim, t.regions.spacing, t.regions.affine,
                           std::move(heat));

  RegionReport rep = region_rank(hv, t.regions);
  REQUIRE(rep.rows.size() == 12);

  // independent accumulation, nested loops instead of the flat pass
  std::map<uint32_t, double> sum;
  std::map<uint32_t, long> cnt;
  for (int k = 0; k < t.regions.dim[2]; ++k)
    for (int j = 0; j < t.regions.dim[1]; ++j)
      for (int i = 0; i < t.regions.dim[0]; ++i) {
        const uint32_t lab = t.regions.at(i, j, k);
        if (lab != 0) {
          sum[lab] += hv.at(i, j, k);
          cnt[lab]++;
        }
      }
  for (const RegionRow &row : rep.rows) {
    REQUIRE(!row.empty);
    REQUIRE(row.voxels == cnt[row.label]);
    REQUIRE(std::abs(row.mean - sum[row.label] / double(cnt[row.label])) <=
            1e-12);
  }
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    CHECK(rep.rows[i].rank == int(i) + 1);
    if (i > 0)
      CHECK(rep.rows[i - 1].mean >= rep.rows[i].mean);
  }

  // positive scaling must not disturb the ordering
  std::vector<double> scaled = hv.data;
  for (double &v : scaled)
    v *= 3.5;
  Volume hv2 = Volume::make(hv.dim, hv.spacing, hv.affine, std::move(scaled));
  RegionReport rep2 = region_rank(hv2, t.regions);
  for (size_t i = 0; i < rep.rows.size(); ++i)
    CHECK(rep.rows[i].label == rep2.rows[i].label);
}

TEST_CASE("region ranking is equivariant under relabeling") {
  MiniTemplate t = make_mini_template(16);
  Rng rng(43);
  std::vector<double> heat(t.regions.size());
  for (double &v : heat)
    v = rng.uniform();
  Volume hv = Volume::make(t.regions.dim, t.regions.spacing, t.regions.affine,
                           std::move(heat));
  RegionReport before = region_rank(hv, t.regions);

  // rotate labels 1..12 by 5
  auto perm = [](uint32_t lab) { return lab == 0 ? 0 : (lab + 4) % 12 + 1; };
  std::vector<uint32_t> relabeled(t.regions.labels.size());
  for (size_t i = 0; i < relabeled.size(); ++i)
    relabeled[i] = perm(t.regions.labels[i]);
  std::map<uint32_t, std::string> renamed;
  for (const auto &[lab, name] : t.regions.names)
    renamed[perm(lab)] = name;
  LabelVolume shuffled = LabelVolume::make(
      t.regions.dim, t.regions.spacing, t.regions.affine, std::move(relabeled),
      std::move(renamed));

  RegionReport after = region_rank(hv, shuffled);
  REQUIRE(after.rows.size() == before.rows.size());
  for (size_t i = 0; i < before.rows.size(); ++i) {
    CHECK(after.rows[i].name == before.rows[i].name);
    CHECK(after.rows[i].mean == before.rows[i].mean);
    CHECK(after.rows[i].voxels == before.rows[i].voxels);
  }
}

TEST_CASE("two-region hand cases: separation, ties, empties, background") {
  // 4x4x4 grid: left half region 1, right half region 2
  std::array<int, 3> dim{4, 4, 4};
  std::vector<uint32_t> labels(64);
  std::vector<double> heat(64);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        labels[size_t((k * 4 + j) * 4 + i)] = i < 2 ? 1 : 2;
        heat[size_t((k * 4 + j) * 4 + i)] = i < 2 ? 1.0 : 0.0;
      }
  LabelVolume atlas =
      LabelVolume::make(dim, {1, 1, 1}, AffineMap::identity(), labels,
                        {{1, "A"}, {2, "B"}});
  Volume hv = Volume::make(dim, {1, 1, 1}, AffineMap::identity(), heat);

  RegionReport rep = region_rank(hv, atlas);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].name == "A");
  CHECK(rep.rows[0].mean == 1.0);
  CHECK(rep.rows[0].rank == 1);
  CHECK(rep.rows[1].name == "B");
  CHECK(rep.rows[1].mean == 0.0);
  CHECK(rep.rows[1].rank == 2);

  // uniform heat ties everything; labels break them in ascending order
  Volume uniform = flat_volume(dim, 0.5);
  RegionReport tied = region_rank(uniform, atlas);
  CHECK(tied.rows[0].label == 1);
  CHECK(tied.rows[1].label == 2);
  CHECK(tied.rows[0].mean == 0.5);
  CHECK(tied.rows[1].mean == 0.5);

  // a named region absent from the voxels is reported, flagged, mean 0
  std::vector<uint32_t> ones(64, 1);
  LabelVolume sparse =
      LabelVolume::make(dim, {1, 1, 1}, AffineMap::identity(), ones,
                        {{1, "A"}, {2, "Gone"}});
  RegionReport withempty = region_rank(uniform, sparse);
  REQUIRE(withempty.rows.size() == 2);
  CHECK(withempty.rows[1].name == "Gone");
  CHECK(withempty.rows[1].empty);
  CHECK(withempty.rows[1].mean == 0.0);
  CHECK(withempty.rows[1].voxels == 0);

  // background appears only on request
  std::vector<uint32_t> halfbg(64);
  for (size_t i = 0; i < 64; ++i)
    halfbg[i] = i < 32 ? 0 : 1;
  LabelVolume bg = LabelVolume::make(dim, {1, 1, 1}, AffineMap::identity(),
                                     halfbg, {{1, "A"}});
  RegionReport nob = region_rank(uniform, bg);
  CHECK(nob.rows.size() == 1);
  RegionReport withb = region_rank(uniform, bg, true);
  REQUIRE(withb.rows.size() == 2);
  bool found = false;
  for (const RegionRow &r : withb.rows)
    if (r.label == 0) {
      found = true;
      CHECK(r.name == "Background");
      CHECK(r.voxels == 32);
      CHECK(r.mean == 0.5);
    }
  CHECK(found);

  Volume small = flat_volume({3, 4, 4}, 0.0);
  CHECK_THROWS_AS(region_rank(small, atlas), InvariantError);
}

TEST_CASE("aggregation averages subject means and re-ranks") {
  RegionRow a1{1, "A", 1.0, 10, 0, false}, b1{2, "B", 0.2, 5, 0, false};
  RegionRow a2{1, "A", 3.0, 10, 0, false}, b2{2, "B", 4.0, 5, 0, false};
  RegionReport r1{0, {a1, b1}}, r2{0, {a2, b2}};

  RegionReport single = aggregate_reports({r1});
  REQUIRE(single.rows.size() == 2);
  CHECK(single.rows[0].name == "A");
  CHECK(single.rows[0].mean == 1.0);

  RegionReport both = aggregate_reports({r1, r2});
  // A: (1+3)/2 = 2, B: (0.2+4)/2 = 2.1 -> B outranks A
  CHECK(both.rows[0].name == "B");
  CHECK(both.rows[0].mean == doctest::Approx(2.1).epsilon(1e-15));
  CHECK(both.rows[1].name == "A");
  CHECK(both.rows[1].mean == 2.0);
  CHECK(both.class_index == 0);

  RegionReport alien{0, {a1}};
  CHECK_THROWS_AS(aggregate_reports({r1, alien}), InvariantError);
  RegionRow renamed = b1;
  renamed.name = "C";
  RegionReport other{0, {a1, renamed}};
  CHECK_THROWS_AS(aggregate_reports({r1, other}), InvariantError);
  CHECK_THROWS_AS(aggregate_reports({}), ConfigError);
}

TEST_CASE("region table renders ranked name-value cells") {
  auto row = [](uint32_t lab, const char *n, double mean) {
    return RegionRow{lab, n, mean, 1, 0, false};
  };
  RegionReport cn{0, {row(1, "Frontal-Temporal", 2.71), row(2, "Sub-lobar", 2.51)}};
  RegionReport mci{1, {row(1, "Frontal-Temporal", 2.45), row(3, "Temporal Lobe", 1.94)}};
  RegionReport mld{2, {row(1, "Frontal-Temporal", 2.76), row(3, "Temporal Lobe", 2.33)}};
  RegionReport mod{3, {row(1, "Frontal-Temporal", 2.76), row(5, "Frontal Lobe", 2.28)}};
  for (RegionReport *r : {&cn, &mci, &mld, &mod})
    for (size_t i = 0; i < r->rows.size(); ++i)
      r->rows[i].rank = int(i) + 1;

  std::string table =
      render_region_table({cn, mci, mld, mod}, {"CN", "MCI", "MLD", "MOD"});
  CHECK(table.find("| CN | MCI | MLD | MOD |") != std::string::npos);
  CHECK(table.find("Frontal-Temporal (2.71)") != std::string::npos);
  CHECK(table.find("| Frontal-Temporal (2.71) | Frontal-Temporal (2.45) | "
                   "Frontal-Temporal (2.76) | Frontal-Temporal (2.76) |") !=
        std::string::npos);
  CHECK(table.find("Sub-lobar (2.51)") != std::string::npos);
  CHECK(table.find("*") == std::string::npos); // nothing empty, no footnote

  RegionReport gap = cn;
  gap.rows[1].empty = true;
  std::string flagged = render_region_table({gap}, {"CN"});
  CHECK(flagged.find("Sub-lobar (2.51)*") != std::string::npos);
  CHECK(flagged.find("no voxels") != std::string::npos);

  CHECK_THROWS_AS(render_region_table({cn}, {"CN", "MCI"}), ConfigError);
  RegionReport shorter{1, {row(1, "Frontal-Temporal", 1.0)}};
  CHECK_THROWS_AS(render_region_table({cn, shorter}, {"CN", "MCI"}),
                  InvariantError);

  std::string csv = region_report_csv(cn);
  CHECK(csv.find("rank,label,region,mean,voxels\n") == 0);
  CHECK(csv.find("1,1,Frontal-Temporal,2.71,1\n") != std::string::npos);
}

TEST_CASE("ablation table renders percentage rows") {
  ArmResult reg{"REG", {}};
  reg.metrics.accuracy = {0.883, 0.905, 0.834, 0.834};
  reg.metrics.precision = {0.868, 0.828, 0.80, 0.955};
  reg.metrics.recall = {0.833, 0.640, 0.693, 0.844};
  ArmResult jm{"JM", {}};
  jm.metrics.accuracy = {0.952, 0.963, 0.902, 0.902};
  jm.metrics.precision = {0.928, 1.0, 0.8333, 0.986};
  jm.metrics.recall = {0.9496, 0.896, 0.786, 0.902};

  std::string table = render_ablation_table({reg, jm});
  CHECK(table.find("REG | 88.3 | 90.5 | 83.4 | 83.4") != std::string::npos);
  CHECK(table.find("JM | 95.2 | 96.3 | 90.2 | 90.2") != std::string::npos);
  CHECK(table.find("Acc CN") != std::string::npos);
  CHECK(table.find("Prec MOD") != std::string::npos);
  CHECK(table.find("| 100.0 |") != std::string::npos);
  CHECK_THROWS_AS(render_ablation_table({}), ConfigError);
}

TEST_CASE("slice exports follow the view conventions") {
  // distinct axis lengths so a mixed-up mapping cannot pass
  std::array<int, 3> dim{5, 6, 7}; // W, H, D
  std::vector<double> data(5 * 6 * 7);
  for (int k = 0; k < 7; ++k)
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 5; ++i)
        data[size_t((k * 6 + j) * 5 + i)] = i + 10.0 * j + 100.0 * k;
  Volume base = Volume::make(dim, {1, 1, 1}, AffineMap::identity(), data);
  Volume zero_heat = flat_volume(dim, 0.0);

  fs::path dir = scratch_dir();
  const std::string prefix = (dir / "view").string();
  std::vector<std::string> files;
  for (int axis : {0, 1, 2}) {
    auto out = overlay_slices(base, zero_heat, axis, {1}, prefix);
    files.insert(files.end(), out.begin(), out.end());
  }
  REQUIRE(files.size() == 6);
  Pnm sag = read_pnm(prefix + "_a0s1.pgm");
  Pnm cor = read_pnm(prefix + "_a1s1.pgm");
  Pnm axi = read_pnm(prefix + "_a2s1.pgm");
  CHECK(sag.w == 7); // (D, H)
  CHECK(sag.h == 6);
  CHECK(cor.w == 5); // (W, D)
  CHECK(cor.h == 7);
  CHECK(axi.w == 5); // (W, H)
  CHECK(axi.h == 6);

  // orientation: axial pixel (row j, col i) shows voxel (i, j, k)
  const double mn = 0.0, mx = 4.0 + 10.0 * 5 + 100.0 * 6;
  auto expect_gray = [&](double v) {
    return uint8_t(std::lround(255.0 * (v - mn) / (mx - mn)));
  };
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 5; ++i)
      REQUIRE(axi.px[size_t(j * 5 + i)] ==
              expect_gray(base.at(i, j, 1)));
  // sagittal pixel (row j, col k) shows voxel (index, j, k)
  for (int j = 0; j < 6; ++j)
    for (int k = 0; k < 7; ++k)
      REQUIRE(sag.px[size_t(j * 7 + k)] == expect_gray(base.at(1, j, k)));
  // coronal pixel (row k, col i) shows voxel (i, index, k)
  for (int k = 0; k < 7; ++k)
    for (int i = 0; i < 5; ++i)
      REQUIRE(cor.px[size_t(k * 5 + i)] == expect_gray(base.at(i, 1, k)));
}

TEST_CASE("zero heat reproduces the grayscale base, a point source one pixel") {
  MiniTemplate t = make_mini_template(16);
  Volume zero_heat = flat_volume(t.image.dim, 0.0);
  fs::path dir = scratch_dir();

  SliceImage plain = render_slice(t.image, zero_heat, 2, 8);
  for (size_t p = 0; p < plain.gray.size(); ++p) {
    REQUIRE(plain.rgb[p * 3 + 0] == plain.gray[p]);
    REQUIRE(plain.rgb[p * 3 + 1] == plain.gray[p]);
    REQUIRE(plain.rgb[p * 3 + 2] == plain.gray[p]);
  }

  std::vector<double> spot(t.image.size(), 0.0);
  spot[t.image.index(5, 9, 8)] = 1.0;
  Volume point = Volume::make(t.image.dim, t.image.spacing, t.image.affine,
                              std::move(spot));
  SliceImage hot = render_slice(t.image, point, 2, 8);
  int differing = 0;
  size_t where = 0;
  for (size_t p = 0; p < hot.gray.size(); ++p) {
    const bool same = hot.rgb[p * 3 + 0] == plain.rgb[p * 3 + 0] &&
                      hot.rgb[p * 3 + 1] == plain.rgb[p * 3 + 1] &&
                      hot.rgb[p * 3 + 2] == plain.rgb[p * 3 + 2];
    if (!same) {
      ++differing;
      where = p;
    }
  }
  CHECK(differing == 1);
  CHECK(where == size_t(9 * 16 + 5)); // row j=9, col i=5
  CHECK(hot.rgb[where * 3 + 0] == 255);
  CHECK(hot.rgb[where * 3 + 1] == 170);
  CHECK(hot.rgb[where * 3 + 2] == 0);

  // a slice through other z leaves everything gray
  SliceImage miss = render_slice(t.image, point, 2, 9);
  for (size_t p = 0; p < miss.gray.size(); ++p)
    REQUIRE(miss.rgb[p * 3] == miss.gray[p]);

  CHECK_THROWS_AS(render_slice(t.image, zero_heat, 2, 16), ConfigError);
  CHECK_THROWS_AS(render_slice(t.image, zero_heat, 3, 0), ConfigError);
  CHECK_THROWS_AS(render_slice(t.image, flat_volume({4, 4, 4}, 0.0), 2, 0),
                  InvariantError);

  // re-rendering writes identical bytes
  const std::string prefix = (dir / "redo").string();
  overlay_slices(t.image, point, 2, {8}, prefix);
  std::string first = slurp(prefix + "_a2s8.ppm");
  overlay_slices(t.image, point, 2, {8}, prefix);
  CHECK(slurp(prefix + "_a2s8.ppm") == first);
}

TEST_CASE("heatmaps survive the volume file format") {
  std::vector<std::array<double, 4>> head(2, {0.4, 1.2, -0.3, 0.8});
  OracleNet net = OracleNet::build(2, 6, head);
  Tensor x = random_input({1, 2, 6, 6, 6}, 55);
  Volume geom = flat_volume({6, 6, 6}, 0.0);
  Heatmap h = grad_cam_3d(net.model, x, 1, 0, geom);

  fs::path dir = scratch_dir();
  const std::string path = (dir / "heat.nii").string();
  write_nifti(h.map, path);
  Volume back = read_nifti(path);
  CHECK(back.dim == h.map.dim);
  for (size_t i = 0; i < back.data.size(); ++i)
    REQUIRE(std::abs(back.data[i] - h.map.data[i]) <= 1e-7);
}
