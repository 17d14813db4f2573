#include "jmorph/kernels.hpp"

// Compiled with -mavx2 -mfma (see CMakeLists). Must not be reached unless
// the CPU reports both features; dispatch checks at startup.

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace jmorph::kernels {
namespace {

// Lane-ordered horizontal sum; keep the order fixed so results are
// reproducible run to run.
inline double hsum(__m256d v) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  return ((lane[0] + lane[1]) + lane[2]) + lane[3];
}

void a_axpy(size_t n, double a, const double *x, double *y) {
  const __m256d av = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i)
    y[i] += a * x[i];
}

double a_dot(size_t n, const double *x, const double *y) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4),
                         a1);
    a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8),
                         a2);
    a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12),
                         _mm256_loadu_pd(y + i + 12), a3);
  }
  for (; i + 4 <= n; i += 4)
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i)
    acc += x[i] * y[i];
  return acc;
}

double a_sum(size_t n, const double *x) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
    a2 = _mm256_add_pd(a2, _mm256_loadu_pd(x + i + 8));
    a3 = _mm256_add_pd(a3, _mm256_loadu_pd(x + i + 12));
  }
  for (; i + 4 <= n; i += 4)
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i)
    acc += x[i];
  return acc;
}

double a_sumsq(size_t n, const double *x) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m256d v0 = _mm256_loadu_pd(x + i);
    __m256d v1 = _mm256_loadu_pd(x + i + 4);
    __m256d v2 = _mm256_loadu_pd(x + i + 8);
    __m256d v3 = _mm256_loadu_pd(x + i + 12);
    a0 = _mm256_fmadd_pd(v0, v0, a0);
    a1 = _mm256_fmadd_pd(v1, v1, a1);
    a2 = _mm256_fmadd_pd(v2, v2, a2);
    a3 = _mm256_fmadd_pd(v3, v3, a3);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    a0 = _mm256_fmadd_pd(v, v, a0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i)
    acc += x[i] * x[i];
  return acc;
}

void a_scale_shift(size_t n, const double *x, double a, double b, double *y) {
  const __m256d av = _mm256_set1_pd(a), bv = _mm256_set1_pd(b);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), bv));
  for (; i < n; ++i)
    y[i] = a * x[i] + b;
}

void a_relu_fwd(size_t n, const double *x, double *y) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i)
    y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void a_relu_bwd(size_t n, const double *x, const double *dy, double *dx) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    __m256d pass = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), pass));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0)
      dx[i] += dy[i];
}

// Vectorizes along x (4 outputs per vector) and blocks 4 output channels so
// each tap load feeds 4 FMAs. Tap loads are unaligned reads from the padded
// row at offsets 0/1/2.
void a_conv3d_fwd(const double *xpad, int cin, int d, int h, int w,
                  const double *wts, double *y, int cout) {
  const int hp = h + 2, wp = w + 2;
  const size_t in_plane = size_t(hp) * wp;
  const size_t in_chan = size_t(d + 2) * in_plane;
  const size_t out_plane = size_t(h) * w;
  const size_t out_chan = size_t(d) * out_plane;
  for (int co0 = 0; co0 < cout; co0 += 4) {
    const int cb = cout - co0 < 4 ? cout - co0 : 4;
    for (int z = 0; z < d; ++z) {
      for (int yy = 0; yy < h; ++yy) {
        int xx = 0;
        for (; xx + 4 <= w; xx += 4) {
          __m256d acc[4];
          for (int b = 0; b < cb; ++b)
            acc[b] = _mm256_loadu_pd(y + size_t(co0 + b) * out_chan +
                                     size_t(z) * out_plane + size_t(yy) * w +
                                     xx);
          for (int ci = 0; ci < cin; ++ci) {
            const double *xc = xpad + size_t(ci) * in_chan;
            const double *wk = wts + (size_t(co0) * cin + ci) * 27;
            const size_t wstride = size_t(cin) * 27;
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky) {
                const double *xr = xc + size_t(z + kz) * in_plane +
                                   size_t(yy + ky) * wp + xx;
                const int tap = (kz * 3 + ky) * 3;
                for (int kx = 0; kx < 3; ++kx) {
                  const __m256d xv = _mm256_loadu_pd(xr + kx);
                  for (int b = 0; b < cb; ++b)
                    acc[b] = _mm256_fmadd_pd(
                        xv,
                        _mm256_broadcast_sd(wk + size_t(b) * wstride + tap + kx),
                        acc[b]);
                }
              }
          }
          for (int b = 0; b < cb; ++b)
            _mm256_storeu_pd(y + size_t(co0 + b) * out_chan +
                                 size_t(z) * out_plane + size_t(yy) * w + xx,
                             acc[b]);
        }
        for (; xx < w; ++xx) {
          for (int b = 0; b < cb; ++b) {
            double acc = 0.0;
            for (int ci = 0; ci < cin; ++ci) {
              const double *xc = xpad + size_t(ci) * in_chan;
              const double *wk = wts + (size_t(co0 + b) * cin + ci) * 27;
              for (int kz = 0; kz < 3; ++kz)
                for (int ky = 0; ky < 3; ++ky) {
                  const double *xr = xc + size_t(z + kz) * in_plane +
                                     size_t(yy + ky) * wp + xx;
                  const double *wr = wk + (kz * 3 + ky) * 3;
                  acc += xr[0] * wr[0] + xr[1] * wr[1] + xr[2] * wr[2];
                }
            }
            y[size_t(co0 + b) * out_chan + size_t(z) * out_plane +
              size_t(yy) * w + xx] += acc;
          }
        }
      }
    }
  }
}

// One pass per (kz,ky) row offset; the three kx taps share each dy load.
void a_conv3d_wgrad(const double *xpad, int cin, int d, int h, int w,
                    const double *dy, int cout, double *dw) {
  const int hp = h + 2, wp = w + 2;
  const size_t in_plane = size_t(hp) * wp;
  const size_t in_chan = size_t(d + 2) * in_plane;
  const size_t out_plane = size_t(h) * w;
  const size_t out_chan = size_t(d) * out_plane;
  for (int co = 0; co < cout; ++co) {
    const double *dyc = dy + size_t(co) * out_chan;
    for (int ci = 0; ci < cin; ++ci) {
      const double *xc = xpad + size_t(ci) * in_chan;
      double *wk = dw + (size_t(co) * cin + ci) * 27;
      for (int kz = 0; kz < 3; ++kz)
        for (int ky = 0; ky < 3; ++ky) {
          __m256d a0 = _mm256_setzero_pd();
          __m256d a1 = _mm256_setzero_pd();
          __m256d a2 = _mm256_setzero_pd();
          double t0 = 0.0, t1 = 0.0, t2 = 0.0;
          for (int z = 0; z < d; ++z)
            for (int yy = 0; yy < h; ++yy) {
              const double *xr =
                  xc + size_t(z + kz) * in_plane + size_t(yy + ky) * wp;
              const double *dyr = dyc + size_t(z) * out_plane + size_t(yy) * w;
              int xx = 0;
              for (; xx + 4 <= w; xx += 4) {
                const __m256d dv = _mm256_loadu_pd(dyr + xx);
                a0 = _mm256_fmadd_pd(_mm256_loadu_pd(xr + xx), dv, a0);
                a1 = _mm256_fmadd_pd(_mm256_loadu_pd(xr + xx + 1), dv, a1);
                a2 = _mm256_fmadd_pd(_mm256_loadu_pd(xr + xx + 2), dv, a2);
              }
              for (; xx < w; ++xx) {
                t0 += xr[xx] * dyr[xx];
                t1 += xr[xx + 1] * dyr[xx];
                t2 += xr[xx + 2] * dyr[xx];
              }
            }
          const int tap = (kz * 3 + ky) * 3;
          wk[tap + 0] += hsum(a0) + t0;
          wk[tap + 1] += hsum(a1) + t1;
          wk[tap + 2] += hsum(a2) + t2;
        }
    }
  }
}

const KernelTable table = {
    "avx2",    a_axpy,     a_dot,      a_sum,        a_sumsq,
    a_scale_shift, a_relu_fwd, a_relu_bwd, a_conv3d_fwd, a_conv3d_wgrad,
};

} // namespace

const KernelTable *avx2_kernels() {
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &table;
  return nullptr;
}

} // namespace jmorph::kernels

#else

namespace jmorph::kernels {
const KernelTable *avx2_kernels() { return nullptr; }
} // namespace jmorph::kernels

#endif
