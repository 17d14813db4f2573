#include "jmorph/kernels.hpp"

#include <algorithm>

// Reference implementation. Plain mul+add everywhere; the AVX2 table is
// validated against this one, so keep it boring.

namespace jmorph::kernels {
namespace {

void s_axpy(size_t n, double a, const double *x, double *y) {
  for (size_t i = 0; i < n; ++i)
    y[i] += a * x[i];
}

double s_dot(size_t n, const double *x, const double *y) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i)
    acc += x[i] * y[i];
  return acc;
}

double s_sum(size_t n, const double *x) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i)
    acc += x[i];
  return acc;
}

double s_sumsq(size_t n, const double *x) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i)
    acc += x[i] * x[i];
  return acc;
}

void s_scale_shift(size_t n, const double *x, double a, double b, double *y) {
  for (size_t i = 0; i < n; ++i)
    y[i] = a * x[i] + b;
}

void s_relu_fwd(size_t n, const double *x, double *y) {
  for (size_t i = 0; i < n; ++i)
    y[i] = std::max(x[i], 0.0);
}

void s_relu_bwd(size_t n, const double *x, const double *dy, double *dx) {
  for (size_t i = 0; i < n; ++i)
    if (x[i] > 0.0)
      dx[i] += dy[i];
}

void s_conv3d_fwd(const double *xpad, int cin, int d, int h, int w,
                  const double *wts, double *y, int cout) {
  const int hp = h + 2, wp = w + 2;
  const size_t in_plane = size_t(hp) * wp;
  const size_t in_chan = size_t(d + 2) * in_plane;
  const size_t out_plane = size_t(h) * w;
  const size_t out_chan = size_t(d) * out_plane;
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      const double *wk = wts + (size_t(co) * cin + ci) * 27;
      const double *xc = xpad + size_t(ci) * in_chan;
      for (int z = 0; z < d; ++z) {
        for (int yy = 0; yy < h; ++yy) {
          double *yrow = y + size_t(co) * out_chan + size_t(z) * out_plane +
                         size_t(yy) * w;
          for (int xx = 0; xx < w; ++xx) {
            double acc = 0.0;
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky) {
                const double *xr = xc + size_t(z + kz) * in_plane +
                                   size_t(yy + ky) * wp + xx;
                const double *wr = wk + (kz * 3 + ky) * 3;
                acc += xr[0] * wr[0] + xr[1] * wr[1] + xr[2] * wr[2];
              }
            yrow[xx] += acc;
          }
        }
      }
    }
  }
}

void s_conv3d_wgrad(const double *xpad, int cin, int d, int h, int w,
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
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            double acc = 0.0;
            for (int z = 0; z < d; ++z)
              for (int yy = 0; yy < h; ++yy) {
                const double *xr = xc + size_t(z + kz) * in_plane +
                                   size_t(yy + ky) * wp + kx;
                const double *dyr = dyc + size_t(z) * out_plane + size_t(yy) * w;
                for (int xx = 0; xx < w; ++xx)
                  acc += xr[xx] * dyr[xx];
              }
            wk[(kz * 3 + ky) * 3 + kx] += acc;
          }
    }
  }
}

} // namespace

const KernelTable &scalar_kernels() {
  static const KernelTable t = {
      "scalar",  s_axpy,     s_dot,      s_sum,        s_sumsq,
      s_scale_shift, s_relu_fwd, s_relu_bwd, s_conv3d_fwd, s_conv3d_wgrad,
  };
  return t;
}

} // namespace jmorph::kernels
