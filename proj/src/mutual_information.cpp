#include "jmorph/mutual_information.hpp"

#include "jmorph/bspline.hpp"
#include "jmorph/errors.hpp"

#include <algorithm>
#include <cmath>

namespace jmorph {

namespace {

void check_bins(int bins, ParzenWindow window) {
  const int least = window == ParzenWindow::cubic ? 4 : 2;
  if (bins < least)
    throw ConfigError("MI bins must be >= " + std::to_string(least) +
                      " for this Parzen window");
}

} // namespace

MiEstimator::MiEstimator(const Volume &fixed, double moving_min,
                         double moving_max, int bins, ParzenWindow window)
    : fixed_(fixed.data), bins_(bins), window_(window) {
  check_bins(bins, window);
  const auto [lo_it, hi_it] = std::minmax_element(fixed_.begin(), fixed_.end());
  const double flo = *lo_it, fhi = *hi_it;
  degenerate_ = !(fhi > flo) || !(moving_max > moving_min);
  fix_lo_ = flo;
  mov_lo_ = moving_min;
  if (degenerate_) {
    fix_scale_ = mov_scale_ = 0.0;
    return;
  }
  // Bin coordinate layout keeps the whole Parzen support inside [0, bins-1]:
  // cubic maps [min,max] onto [1, bins-2]; the box window onto [0, bins-1].
  if (window == ParzenWindow::cubic) {
    fix_scale_ = double(bins - 3) / (fhi - flo);
    mov_scale_ = double(bins - 3) / (moving_max - moving_min);
  } else {
    fix_scale_ = double(bins - 1) / (fhi - flo);
    mov_scale_ = double(bins - 1) / (moving_max - moving_min);
  }
  fixed_taps_.reserve(fixed_.size());
  for (double v : fixed_)
    fixed_taps_.push_back(taps(v, fix_lo_, fix_scale_));
}

MiEstimator::Taps MiEstimator::taps(double value, double lo,
                                    double scale) const {
  Taps t{};
  if (window_ == ParzenWindow::nearest) {
    const double b = (value - lo) * scale;
    t.base = std::clamp(int(std::floor(b + 0.5)), 0, bins_ - 1);
    t.w[0] = 1.0;
    t.d1[0] = 0.0;
    t.count = 1;
    return t;
  }
  double b = 1.0 + (value - lo) * scale;
  b = std::clamp(b, 1.0, double(bins_ - 2));
  const double fl = std::floor(b);
  const SplineWeights sw = cubic_bspline_weights(b - fl);
  t.base = int(fl) - 1;
  t.count = 4;
  for (int i = 0; i < 4; ++i) {
    // The top boundary tap can land on bins_; its weight is exactly 0 there.
    const bool in = t.base + i >= 0 && t.base + i < bins_;
    t.w[i] = in ? sw.w[i] : 0.0;
    t.d1[i] = in ? sw.d1[i] * scale : 0.0;
  }
  return t;
}

double MiEstimator::mi_from_joint(std::vector<double> &joint,
                                  double /*n_samples*/) const {
  const int B = bins_;
  std::vector<double> hm(B, 0.0), hf(B, 0.0);
  double total = 0.0;
  for (int m = 0; m < B; ++m)
    for (int f = 0; f < B; ++f) {
      const double h = joint[size_t(m) * B + f];
      hm[m] += h;
      hf[f] += h;
      total += h;
    }
  if (!(total > 0.0))
    return 0.0;
  double mi = 0.0;
  for (int m = 0; m < B; ++m) {
    if (hm[m] <= 0.0)
      continue;
    for (int f = 0; f < B; ++f) {
      const double h = joint[size_t(m) * B + f];
      if (h <= 0.0)
        continue;
      mi += h * std::log(h * total / (hm[m] * hf[f]));
    }
  }
  return mi / total;
}

double MiEstimator::eval(const std::vector<double> &warped) const {
  if (warped.size() != fixed_.size())
    throw InvariantError("MI operand dimension mismatch");
  if (degenerate_)
    return 0.0;
  const int B = bins_;
  std::vector<double> joint(size_t(B) * B, 0.0);
  for (size_t i = 0; i < warped.size(); ++i) {
    const Taps tm = taps(warped[i], mov_lo_, mov_scale_);
    const Taps &tf = fixed_taps_[i];
    for (int a = 0; a < tm.count; ++a) {
      if (tm.w[a] == 0.0)
        continue;
      double *row = joint.data() + size_t(tm.base + a) * B + tf.base;
      for (int b = 0; b < tf.count; ++b)
        row[b] += tm.w[a] * tf.w[b];
    }
  }
  return mi_from_joint(joint, double(warped.size()));
}

double MiEstimator::eval_grad(const std::vector<double> &warped,
                              std::vector<double> &dmi) const {
  if (warped.size() != fixed_.size())
    throw InvariantError("MI operand dimension mismatch");
  dmi.assign(warped.size(), 0.0);
  if (degenerate_)
    return 0.0;
  const int B = bins_;
  std::vector<double> joint(size_t(B) * B, 0.0);
  std::vector<Taps> mtaps(warped.size());
  for (size_t i = 0; i < warped.size(); ++i) {
    mtaps[i] = taps(warped[i], mov_lo_, mov_scale_);
    const Taps &tm = mtaps[i];
    const Taps &tf = fixed_taps_[i];
    for (int a = 0; a < tm.count; ++a) {
      if (tm.w[a] == 0.0)
        continue;
      double *row = joint.data() + size_t(tm.base + a) * B + tf.base;
      for (int b = 0; b < tf.count; ++b)
        row[b] += tm.w[a] * tf.w[b];
    }
  }
  std::vector<double> hm(B, 0.0);
  double total = 0.0;
  for (int m = 0; m < B; ++m)
    for (int f = 0; f < B; ++f) {
      hm[m] += joint[size_t(m) * B + f];
      total += joint[size_t(m) * B + f];
    }
  if (!(total > 0.0))
    return 0.0;

  // Only the moving-axis-dependent parts of dMI/dH survive, because the
  // window derivative weights sum to zero: dMI/dw = (1/S) sum_f w_f
  // sum_m d1_m (ln H_mf - ln Hm).
  std::vector<double> log_ratio(size_t(B) * B, 0.0);
  for (int m = 0; m < B; ++m) {
    if (hm[m] <= 0.0)
      continue;
    const double lm = std::log(hm[m]);
    for (int f = 0; f < B; ++f) {
      const double h = joint[size_t(m) * B + f];
      log_ratio[size_t(m) * B + f] = h > 0.0 ? std::log(h) - lm : 0.0;
    }
  }
  const double inv_total = 1.0 / total;
  for (size_t i = 0; i < warped.size(); ++i) {
    const Taps &tm = mtaps[i];
    const Taps &tf = fixed_taps_[i];
    double acc = 0.0;
    for (int a = 0; a < tm.count; ++a) {
      if (tm.d1[a] == 0.0)
        continue;
      const double *row = log_ratio.data() + size_t(tm.base + a) * B + tf.base;
      double inner = 0.0;
      for (int b = 0; b < tf.count; ++b)
        inner += tf.w[b] * row[b];
      acc += tm.d1[a] * inner;
    }
    dmi[i] = acc * inv_total;
  }
  return mi_from_joint(joint, double(warped.size()));
}

double mattes_mi(const Volume &fixed, const Volume &moving_warped, int bins,
                 ParzenWindow window) {
  if (fixed.dim != moving_warped.dim)
    throw InvariantError("MI operand dimension mismatch");
  check_bins(bins, window);
  const auto [lo, hi] = std::minmax_element(moving_warped.data.begin(),
                                            moving_warped.data.end());
  const MiEstimator est(fixed, *lo, *hi, bins, window);
  return est.eval(moving_warped.data);
}

} // namespace jmorph
