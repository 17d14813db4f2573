#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "jmorph/kernels.hpp"
#include "jmorph/rng.hpp"

#include <cmath>
#include <cstring>
#include <vector>

using jmorph::Rng;
using namespace jmorph::kernels;

namespace {

std::vector<double> random_vec(Rng &rng, size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (auto &x : v)
    x = rng.uniform(lo, hi);
  return v;
}

// Scalar and AVX2 differ by FMA contraction and summation order, so compare
// with a magnitude-relative tolerance rather than exactly.
void check_close(double a, double b, double scale) {
  CHECK(std::abs(a - b) <= 1e-11 * (scale + 1.0));
}

void check_close_vec(const std::vector<double> &a, const std::vector<double> &b,
                     double scale) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= 1e-11 * (scale + 1.0));
}

// Independent convolution oracle: textbook triple loop, no shared code with
// either kernel table.
void naive_conv3d(const std::vector<double> &xpad, int cin, int d, int h, int w,
                  const std::vector<double> &wts, std::vector<double> &y,
                  int cout) {
  const int hp = h + 2, wp = w + 2, dp = d + 2;
  for (int co = 0; co < cout; ++co)
    for (int z = 0; z < d; ++z)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  size_t xi = ((size_t(ci) * dp + (z + kz)) * hp + (yy + ky)) *
                                  wp +
                              (xx + kx);
                  size_t wi =
                      ((size_t(co) * cin + ci) * 3 + kz) * 9 + ky * 3 + kx;
                  acc += xpad[xi] * wts[wi];
                }
          y[((size_t(co) * d + z) * h + yy) * w + xx] += acc;
        }
}

void naive_wgrad(const std::vector<double> &xpad, int cin, int d, int h, int w,
                 const std::vector<double> &dy, int cout,
                 std::vector<double> &dw) {
  const int hp = h + 2, wp = w + 2, dp = d + 2;
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int kz = 0; kz < 3; ++kz)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            double acc = 0.0;
            for (int z = 0; z < d; ++z)
              for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx) {
                  size_t xi = ((size_t(ci) * dp + (z + kz)) * hp + (yy + ky)) *
                                  wp +
                              (xx + kx);
                  acc += xpad[xi] * dy[((size_t(co) * d + z) * h + yy) * w + xx];
                }
            dw[((size_t(co) * cin + ci) * 3 + kz) * 9 + ky * 3 + kx] += acc;
          }
}

} // namespace

TEST_CASE("scalar table matches the naive convolution oracle") {
  Rng rng(77);
  const int cin = 3, cout = 5, d = 4, h = 5, w = 7;
  auto xpad = random_vec(rng, size_t(cin) * (d + 2) * (h + 2) * (w + 2));
  auto wts = random_vec(rng, size_t(cout) * cin * 27);
  std::vector<double> bias = random_vec(rng, size_t(cout) * d * h * w);
  auto ya = bias, yb = bias;
  scalar_kernels().conv3d_fwd(xpad.data(), cin, d, h, w, wts.data(), ya.data(),
                              cout);
  naive_conv3d(xpad, cin, d, h, w, wts, yb, cout);
  check_close_vec(ya, yb, 27.0 * cin * 4.0);
}

TEST_CASE("scalar weight gradient matches the naive oracle") {
  Rng rng(78);
  const int cin = 2, cout = 3, d = 3, h = 4, w = 6;
  auto xpad = random_vec(rng, size_t(cin) * (d + 2) * (h + 2) * (w + 2));
  auto dy = random_vec(rng, size_t(cout) * d * h * w);
  std::vector<double> da(size_t(cout) * cin * 27, 0.5);
  auto db = da;
  scalar_kernels().conv3d_wgrad(xpad.data(), cin, d, h, w, dy.data(), cout,
                                da.data());
  naive_wgrad(xpad, cin, d, h, w, dy, cout, db);
  check_close_vec(da, db, double(d) * h * w * 4.0);
}

TEST_CASE("avx2 table agrees with scalar on every op") {
  const KernelTable *avx = avx2_kernels();
  if (!avx) {
    MESSAGE("AVX2 not available on this CPU; skipping");
    return;
  }
  const KernelTable &ref = scalar_kernels();
  Rng rng(79);

  // Sizes straddle the 4-wide and 16-wide strides, including odd tails.
  for (size_t n : {size_t(1), size_t(3), size_t(4), size_t(17), size_t(1000),
                   size_t(4099)}) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);

    auto y1 = y, y2 = y;
    ref.axpy(n, 1.7, x.data(), y1.data());
    avx->axpy(n, 1.7, x.data(), y2.data());
    check_close_vec(y1, y2, 4.0);

    check_close(ref.dot(n, x.data(), y.data()), avx->dot(n, x.data(), y.data()),
                4.0 * double(n));
    check_close(ref.sum(n, x.data()), avx->sum(n, x.data()), 2.0 * double(n));
    check_close(ref.sumsq(n, x.data()), avx->sumsq(n, x.data()),
                4.0 * double(n));

    std::vector<double> s1(n), s2(n);
    ref.scale_shift(n, x.data(), -0.3, 0.9, s1.data());
    avx->scale_shift(n, x.data(), -0.3, 0.9, s2.data());
    check_close_vec(s1, s2, 2.0);

    std::vector<double> r1(n), r2(n);
    ref.relu_fwd(n, x.data(), r1.data());
    avx->relu_fwd(n, x.data(), r2.data());
    CHECK(r1 == r2);

    auto d1 = random_vec(rng, n);
    auto d2 = d1;
    ref.relu_bwd(n, x.data(), y.data(), d1.data());
    avx->relu_bwd(n, x.data(), y.data(), d2.data());
    CHECK(d1 == d2);
  }
}

TEST_CASE("avx2 convolution agrees with scalar across shape tails") {
  const KernelTable *avx = avx2_kernels();
  if (!avx) {
    MESSAGE("AVX2 not available on this CPU; skipping");
    return;
  }
  const KernelTable &ref = scalar_kernels();
  Rng rng(80);
  struct Shape {
    int cin, cout, d, h, w;
  };
  // cout both multiple of 4 and not; w both multiple of 4 and not.
  for (Shape s : {Shape{1, 1, 2, 3, 5}, Shape{3, 5, 4, 5, 7},
                  Shape{2, 4, 3, 4, 8}, Shape{4, 10, 2, 6, 6}}) {
    auto xpad =
        random_vec(rng, size_t(s.cin) * (s.d + 2) * (s.h + 2) * (s.w + 2));
    auto wts = random_vec(rng, size_t(s.cout) * s.cin * 27);
    auto bias = random_vec(rng, size_t(s.cout) * s.d * s.h * s.w);
    auto ya = bias, yb = bias;
    ref.conv3d_fwd(xpad.data(), s.cin, s.d, s.h, s.w, wts.data(), ya.data(),
                   s.cout);
    avx->conv3d_fwd(xpad.data(), s.cin, s.d, s.h, s.w, wts.data(), yb.data(),
                    s.cout);
    check_close_vec(ya, yb, 27.0 * s.cin * 4.0);

    auto dy = random_vec(rng, size_t(s.cout) * s.d * s.h * s.w);
    std::vector<double> wa(size_t(s.cout) * s.cin * 27, 0.0), wb = wa;
    ref.conv3d_wgrad(xpad.data(), s.cin, s.d, s.h, s.w, dy.data(), s.cout,
                     wa.data());
    avx->conv3d_wgrad(xpad.data(), s.cin, s.d, s.h, s.w, dy.data(), s.cout,
                      wb.data());
    check_close_vec(wa, wb, double(s.d) * s.h * s.w * 4.0);
  }
}

TEST_CASE("reductions are bit-deterministic within a table") {
  Rng rng(81);
  auto x = random_vec(rng, 10007);
  auto y = random_vec(rng, 10007);
  for (const KernelTable *t : {&scalar_kernels(), avx2_kernels()}) {
    if (!t)
      continue;
    double d1 = t->dot(x.size(), x.data(), y.data());
    double d2 = t->dot(x.size(), x.data(), y.data());
    CHECK(std::memcmp(&d1, &d2, sizeof d1) == 0);
    double s1 = t->sum(x.size(), x.data());
    double s2 = t->sum(x.size(), x.data());
    CHECK(std::memcmp(&s1, &s2, sizeof s1) == 0);
  }
}

TEST_CASE("dispatch lands on a known table") {
  const KernelTable &t = active_kernels();
  bool known = std::string(t.name) == "scalar" || std::string(t.name) == "avx2";
  CHECK(known);
}
