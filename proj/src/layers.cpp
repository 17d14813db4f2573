#include "jmorph/layers.hpp"

#include "jmorph/errors.hpp"
#include "jmorph/kernels.hpp"
#include "jmorph/util.hpp"

#include <algorithm>
#include <cmath>

namespace jmorph {

namespace {

void check_conv_input(const Tensor &x, int cin, const char *who) {
  x.validate();
  if (x.shape.size() != 5 || x.shape[1] != cin)
    throw InvariantError(std::string(who) + ": expected (N," +
                         std::to_string(cin) + ",D,H,W) input, got " +
                         shape_str(x.shape));
}

// zero-padded copy of one sample, (C, D+2, H+2, W+2)
void pad_sample(const double *x, int c, int d, int h, int w,
                std::vector<double> &out) {
  const size_t wp = size_t(w) + 2, hp = size_t(h) + 2, dp = size_t(d) + 2;
  out.assign(size_t(c) * dp * hp * wp, 0.0);
  for (int ci = 0; ci < c; ++ci)
    for (int z = 0; z < d; ++z)
      for (int y = 0; y < h; ++y) {
        const double *src =
            x + ((size_t(ci) * d + z) * h + y) * size_t(w);
        double *dst = &out[((size_t(ci) * dp + z + 1) * hp + y + 1) * wp + 1];
        std::copy(src, src + w, dst);
      }
}

} // namespace

Conv3d Conv3d::create(int cin, int cout, Rng &rng) {
  if (cin < 1 || cout < 1)
    throw ConfigError("conv channels must be positive");
  Conv3d c;
  c.cin = cin;
  c.cout = cout;
  c.w = Tensor::zeros({cout, cin, 3, 3, 3});
  c.b = Tensor::zeros({cout});
  const double limit = std::sqrt(6.0 / (double(cin) * 27.0));
  for (double &v : c.w.val)
    v = rng.uniform(-limit, limit);
  return c;
}

Tensor Conv3d::forward(const Tensor &x) const {
  check_conv_input(x, cin, "conv");
  const int n = x.shape[0], d = x.shape[2], h = x.shape[3], w4 = x.shape[4];
  Tensor y = Tensor::zeros({n, cout, d, h, w4});
  const size_t in_sample = x.size() / size_t(n);
  const size_t out_plane = size_t(d) * h * w4;
  const size_t out_sample = size_t(cout) * out_plane;
  const auto &K = kernels::active_kernels();
  parallel_for(n, [&](int64_t s) {
    std::vector<double> xpad;
    pad_sample(x.val.data() + size_t(s) * in_sample, cin, d, h, w4, xpad);
    double *ys = y.val.data() + size_t(s) * out_sample;
    for (int co = 0; co < cout; ++co)
      std::fill(ys + size_t(co) * out_plane, ys + size_t(co + 1) * out_plane,
                b.val[size_t(co)]);
    K.conv3d_fwd(xpad.data(), cin, d, h, w4, w.val.data(), ys, cout);
  });
  return y;
}

Tensor Conv3d::backward(const Tensor &x, const Tensor &dy) {
  check_conv_input(x, cin, "conv");
  const int n = x.shape[0], d = x.shape[2], h = x.shape[3], w4 = x.shape[4];
  if (dy.shape != std::vector<int>{n, cout, d, h, w4})
    throw InvariantError("conv: cotangent shape " + shape_str(dy.shape) +
                         " does not match output");
  w.require_grad();
  b.require_grad();
  Tensor dx = Tensor::zeros({n, cin, d, h, w4});

  // the input gradient is the same convolution with channel-transposed,
  // spatially flipped weights applied to the padded cotangent
  std::vector<double> wflip(w.val.size());
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int t = 0; t < 27; ++t)
        wflip[(size_t(ci) * cout + co) * 27 + size_t(26 - t)] =
            w.val[(size_t(co) * cin + ci) * 27 + size_t(t)];

  const size_t in_sample = x.size() / size_t(n);
  const size_t out_plane = size_t(d) * h * w4;
  const size_t out_sample = size_t(cout) * out_plane;
  const auto &K = kernels::active_kernels();
  std::vector<std::vector<double>> dw_part;
  dw_part.resize(size_t(n));
  parallel_for(n, [&](int64_t s) {
    std::vector<double> pad;
    const double *dys = dy.val.data() + size_t(s) * out_sample;
    pad_sample(dys, cout, d, h, w4, pad);
    K.conv3d_fwd(pad.data(), cout, d, h, w4, wflip.data(),
                 dx.val.data() + size_t(s) * in_sample, cin);
    pad_sample(x.val.data() + size_t(s) * in_sample, cin, d, h, w4, pad);
    dw_part[size_t(s)].assign(w.val.size(), 0.0);
    K.conv3d_wgrad(pad.data(), cin, d, h, w4, dys, cout,
                   dw_part[size_t(s)].data());
  });
  // fixed-order reduction keeps gradients deterministic under threading
  for (int s = 0; s < n; ++s) {
    K.axpy(w.val.size(), 1.0, dw_part[size_t(s)].data(), w.grad.data());
    for (int co = 0; co < cout; ++co)
      b.grad[size_t(co)] += K.sum(
          out_plane, dy.val.data() + size_t(s) * out_sample + size_t(co) * out_plane);
  }
  return dx;
}

BatchNorm BatchNorm::create(int channels) {
  if (channels < 1)
    throw ConfigError("batch norm needs at least one channel");
  BatchNorm bn;
  bn.channels = channels;
  bn.gamma = Tensor::zeros({channels});
  bn.beta = Tensor::zeros({channels});
  bn.running_mean = Tensor::zeros({channels});
  bn.running_var = Tensor::zeros({channels});
  std::fill(bn.gamma.val.begin(), bn.gamma.val.end(), 1.0);
  std::fill(bn.running_var.val.begin(), bn.running_var.val.end(), 1.0);
  return bn;
}

Tensor BatchNorm::forward(const Tensor &x, bool train, Cache &cache) {
  check_conv_input(x, channels, "batch norm");
  const int n = x.shape[0];
  const size_t plane = x.size() / (size_t(n) * channels);
  const size_t sample = size_t(channels) * plane;
  const double m = double(size_t(n) * plane);
  const auto &K = kernels::active_kernels();

  Tensor y = Tensor::zeros(x.shape);
  cache.train = train;
  cache.inv_std.assign(size_t(channels), 0.0);
  cache.xhat = Tensor::zeros(x.shape);
  for (int c = 0; c < channels; ++c) {
    double mean, var;
    if (train) {
      double s = 0, ss = 0;
      for (int s0 = 0; s0 < n; ++s0) {
        const double *xc = x.val.data() + size_t(s0) * sample + size_t(c) * plane;
        s += K.sum(plane, xc);
        ss += K.sumsq(plane, xc);
      }
      mean = s / m;
      var = std::max(ss / m - mean * mean, 0.0);
      running_mean.val[size_t(c)] =
          (1.0 - momentum) * running_mean.val[size_t(c)] + momentum * mean;
      running_var.val[size_t(c)] =
          (1.0 - momentum) * running_var.val[size_t(c)] + momentum * var;
    } else {
      mean = running_mean.val[size_t(c)];
      var = running_var.val[size_t(c)];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    cache.inv_std[size_t(c)] = is;
    for (int s0 = 0; s0 < n; ++s0) {
      const size_t off = size_t(s0) * sample + size_t(c) * plane;
      K.scale_shift(plane, x.val.data() + off, is, -mean * is,
                    cache.xhat.val.data() + off);
      K.scale_shift(plane, cache.xhat.val.data() + off, gamma.val[size_t(c)],
                    beta.val[size_t(c)], y.val.data() + off);
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Cache &cache, const Tensor &dy) {
  const Tensor &xh = cache.xhat;
  if (dy.shape != xh.shape)
    throw InvariantError("batch norm: cotangent shape mismatch");
  const int n = dy.shape[0];
  const size_t plane = dy.size() / (size_t(n) * channels);
  const size_t sample = size_t(channels) * plane;
  const double m = double(size_t(n) * plane);
  const auto &K = kernels::active_kernels();
  gamma.require_grad();
  beta.require_grad();
  Tensor dx = Tensor::zeros(dy.shape);
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (int s0 = 0; s0 < n; ++s0) {
      const size_t off = size_t(s0) * sample + size_t(c) * plane;
      sum_dy += K.sum(plane, dy.val.data() + off);
      sum_dy_xhat +=
          K.dot(plane, dy.val.data() + off, xh.val.data() + off);
    }
    gamma.grad[size_t(c)] += sum_dy_xhat;
    beta.grad[size_t(c)] += sum_dy;
    const double g_is = gamma.val[size_t(c)] * cache.inv_std[size_t(c)];
    for (int s0 = 0; s0 < n; ++s0) {
      const size_t off = size_t(s0) * sample + size_t(c) * plane;
      double *d = dx.val.data() + off;
      if (cache.train) {
        // dx = g/sigma (dy - mean(dy) - xhat mean(dy xhat))
        K.scale_shift(plane, dy.val.data() + off, g_is,
                      -g_is * sum_dy / m, d);
        K.axpy(plane, -g_is * sum_dy_xhat / m, xh.val.data() + off, d);
      } else {
        K.scale_shift(plane, dy.val.data() + off, g_is, 0.0, d);
      }
    }
  }
  return dx;
}

Tensor MaxPool::forward(const Tensor &x, std::vector<size_t> &argmax) const {
  x.validate();
  if (x.shape.size() != 5)
    throw InvariantError("max pool: expected (N,C,D,H,W) input, got " +
                         shape_str(x.shape));
  const int n = x.shape[0], c = x.shape[1], d = x.shape[2], h = x.shape[3],
            w = x.shape[4];
  const int od = d / 2, oh = h / 2, ow = w / 2;
  if (od < 1 || oh < 1 || ow < 1)
    throw InvariantError("max pool: input " + shape_str(x.shape) +
                         " too small to pool");
  Tensor y = Tensor::zeros({n, c, od, oh, ow});
  argmax.assign(y.size(), 0);
  size_t o = 0;
  for (int s = 0; s < n; ++s)
    for (int ci = 0; ci < c; ++ci) {
      const size_t base = (size_t(s) * c + ci) * d;
      for (int z = 0; z < od; ++z)
        for (int yy = 0; yy < oh; ++yy)
          for (int xx = 0; xx < ow; ++xx, ++o) {
            double best = -1e300;
            size_t best_at = 0;
            for (int dz = 0; dz < 2; ++dz)
              for (int dyy = 0; dyy < 2; ++dyy)
                for (int dxx = 0; dxx < 2; ++dxx) {
                  const size_t at =
                      ((base + size_t(2 * z + dz)) * h + size_t(2 * yy + dyy)) *
                          size_t(w) +
                      size_t(2 * xx + dxx);
                  if (x.val[at] > best) { // ties keep the first in scan order
                    best = x.val[at];
                    best_at = at;
                  }
                }
            y.val[o] = best;
            argmax[o] = best_at;
          }
    }
  return y;
}

Tensor MaxPool::backward(const std::vector<size_t> &argmax,
                         const std::vector<int> &xshape,
                         const Tensor &dy) const {
  if (argmax.size() != dy.size())
    throw InvariantError("max pool: cotangent does not match recorded winners");
  Tensor dx = Tensor::zeros(xshape);
  for (size_t i = 0; i < argmax.size(); ++i)
    dx.val[argmax[i]] += dy.val[i];
  return dx;
}

Dense Dense::create(int in, int out, Rng &rng) {
  if (in < 1 || out < 1)
    throw ConfigError("dense widths must be positive");
  Dense d;
  d.in = in;
  d.out = out;
  d.w = Tensor::zeros({out, in});
  d.b = Tensor::zeros({out});
  const double limit = std::sqrt(6.0 / double(in));
  for (double &v : d.w.val)
    v = rng.uniform(-limit, limit);
  return d;
}

Tensor Dense::forward(const Tensor &x) const {
  x.validate();
  if (x.shape.size() != 2 || x.shape[1] != in)
    throw InvariantError("dense: expected (N," + std::to_string(in) +
                         ") input, got " + shape_str(x.shape));
  const int n = x.shape[0];
  Tensor y = Tensor::zeros({n, out});
  const auto &K = kernels::active_kernels();
  for (int s = 0; s < n; ++s) {
    const double *xs = x.val.data() + size_t(s) * in;
    double *ys = y.val.data() + size_t(s) * out;
    for (int o = 0; o < out; ++o)
      ys[o] = b.val[size_t(o)] + K.dot(size_t(in), w.val.data() + size_t(o) * in, xs);
  }
  return y;
}

Tensor Dense::backward(const Tensor &x, const Tensor &dy) {
  if (dy.shape != std::vector<int>{x.shape[0], out})
    throw InvariantError("dense: cotangent shape mismatch");
  w.require_grad();
  b.require_grad();
  const int n = x.shape[0];
  Tensor dx = Tensor::zeros(x.shape);
  const auto &K = kernels::active_kernels();
  for (int s = 0; s < n; ++s) {
    const double *xs = x.val.data() + size_t(s) * in;
    const double *dys = dy.val.data() + size_t(s) * out;
    double *dxs = dx.val.data() + size_t(s) * in;
    for (int o = 0; o < out; ++o) {
      K.axpy(size_t(in), dys[o], xs, w.grad.data() + size_t(o) * in);
      K.axpy(size_t(in), dys[o], w.val.data() + size_t(o) * in, dxs);
      b.grad[size_t(o)] += dys[o];
    }
  }
  return dx;
}

Tensor relu_forward(const Tensor &x) {
  Tensor y = Tensor::zeros(x.shape);
  kernels::active_kernels().relu_fwd(x.val.size(), x.val.data(), y.val.data());
  return y;
}

Tensor relu_backward(const Tensor &x, const Tensor &dy) {
  if (dy.val.size() != x.val.size())
    throw InvariantError("relu: cotangent size mismatch");
  Tensor dx = Tensor::zeros(x.shape);
  kernels::active_kernels().relu_bwd(x.val.size(), x.val.data(),
                                     dy.val.data(), dx.val.data());
  return dx;
}

Tensor dropout_forward(const Tensor &x, double p, bool train, Rng &rng,
                       std::vector<uint8_t> &mask) {
  if (!(p >= 0.0 && p < 1.0))
    throw ConfigError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) {
    mask.clear(); // empty mask records that dropout was a no-op
    return x;
  }
  Tensor y = Tensor::zeros(x.shape);
  mask.assign(x.val.size(), 0);
  const double keep = 1.0 / (1.0 - p);
  for (size_t i = 0; i < x.val.size(); ++i)
    if (rng.uniform() >= p) {
      mask[i] = 1;
      y.val[i] = x.val[i] * keep;
    }
  return y;
}

Tensor dropout_backward(const std::vector<uint8_t> &mask, double p,
                        const Tensor &dy) {
  if (mask.size() != dy.val.size())
    throw InvariantError("dropout: cotangent does not match recorded mask");
  Tensor dx = Tensor::zeros(dy.shape);
  const double keep = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i])
      dx.val[i] = dy.val[i] * keep;
  return dx;
}

Tensor softmax(const Tensor &logits) {
  logits.validate();
  if (logits.shape.size() != 2)
    throw InvariantError("softmax expects (N, K) logits, got " +
                         shape_str(logits.shape));
  const int n = logits.shape[0], k = logits.shape[1];
  Tensor p = Tensor::zeros(logits.shape);
  for (int s = 0; s < n; ++s) {
    const double *l = logits.val.data() + size_t(s) * k;
    double *ps = p.val.data() + size_t(s) * k;
    double mx = l[0];
    for (int i = 1; i < k; ++i)
      mx = std::max(mx, l[i]);
    double z = 0;
    for (int i = 0; i < k; ++i) {
      ps[i] = std::exp(l[i] - mx);
      z += ps[i];
    }
    // the floor keeps rows strictly positive when exp underflows; the sum
    // stays 1 within 1e-12
    for (int i = 0; i < k; ++i)
      ps[i] = std::max(ps[i] / z, 1e-300);
  }
  return p;
}

std::pair<double, Tensor> cross_entropy(const Tensor &logits,
                                        const std::vector<int> &labels) {
  if (logits.shape.size() != 2 || size_t(logits.shape[0]) != labels.size())
    throw InvariantError("cross entropy: need one label per logits row");
  const int n = logits.shape[0], k = logits.shape[1];
  for (int y : labels)
    if (y < 0 || y >= k)
      throw InvariantError("label " + std::to_string(y) + " outside 0.." +
                           std::to_string(k - 1));
  Tensor d = softmax(logits);
  double loss = 0;
  for (int s = 0; s < n; ++s) {
    double *row = d.val.data() + size_t(s) * k;
    loss -= std::log(std::max(row[size_t(labels[size_t(s)])], 1e-300));
    row[size_t(labels[size_t(s)])] -= 1.0;
    for (int i = 0; i < k; ++i)
      row[i] /= double(n);
  }
  return {loss / double(n), std::move(d)};
}

} // namespace jmorph
