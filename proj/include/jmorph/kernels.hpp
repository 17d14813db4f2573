#pragma once

#include <cstddef>

namespace jmorph::kernels {

// Data-parallel inner loops shared by the network, registration and map code.
// Two implementations exist: a scalar reference and an AVX2/FMA variant.
// The active table is picked once at startup from CPU features; JMAP_KERNELS
// ("scalar" or "avx2") forces a specific one. Both tables are exercised
// against each other by the equivalence tests.
//
// Reduction kernels (dot/sum/sumsq/conv3d_wgrad) combine their partial lanes
// in a fixed order, so a given table is bit-deterministic run to run.
struct KernelTable {
  const char *name;

  // y[i] += a * x[i]
  void (*axpy)(size_t n, double a, const double *x, double *y);
  // sum_i x[i] * y[i]
  double (*dot)(size_t n, const double *x, const double *y);
  double (*sum)(size_t n, const double *x);
  double (*sumsq)(size_t n, const double *x);
  // y[i] = a * x[i] + b
  void (*scale_shift)(size_t n, const double *x, double a, double b,
                      double *y);
  // y[i] = max(x[i], 0)
  void (*relu_fwd)(size_t n, const double *x, double *y);
  // dx[i] += x[i] > 0 ? dy[i] : 0
  void (*relu_bwd)(size_t n, const double *x, const double *dy, double *dx);

  // 3x3x3 convolution, stride 1, over a pre-padded input.
  //   xpad: (cin, d+2, h+2, w+2), w: (cout, cin, 3, 3, 3), y: (cout, d, h, w)
  // Accumulates into y (caller seeds it with the bias).
  void (*conv3d_fwd)(const double *xpad, int cin, int d, int h, int w,
                     const double *wts, double *y, int cout);
  // Weight gradient of the same convolution; accumulates into dw.
  //   dy: (cout, d, h, w), dw: (cout, cin, 3, 3, 3)
  void (*conv3d_wgrad)(const double *xpad, int cin, int d, int h, int w,
                       const double *dy, int cout, double *dw);
};

const KernelTable &scalar_kernels();

// nullptr when the CPU (or build target) lacks AVX2+FMA.
const KernelTable *avx2_kernels();

const KernelTable &active_kernels();

} // namespace jmorph::kernels
