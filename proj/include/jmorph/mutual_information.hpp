#pragma once

#include "jmorph/volume.hpp"

#include <vector>

namespace jmorph {

// Parzen window used on BOTH intensity axes. Using the same window on the
// two axes makes the metric exactly symmetric under argument swap, which the
// shipped property gate requires; the classic asymmetric pairing (cubic on
// moving, box on fixed) cannot meet that bound.
enum class ParzenWindow { cubic, nearest };

// Mutual information of two same-shaped volumes from a Parzen joint
// histogram. Intensities map linearly from each volume's own [min, max] into
// bin space; marginals are row/column sums of the joint, so the value is a
// KL divergence and nonnegative up to rounding. Either volume constant
// returns 0. Cubic needs bins >= 4, nearest bins >= 2.
double mattes_mi(const Volume &fixed, const Volume &moving_warped, int bins,
                 ParzenWindow window = ParzenWindow::cubic);

// Registration-facing evaluator with a frozen intensity mapping: bin scales
// are fixed at construction (from the un-warped moving image), so the
// analytic gradient matches finite differences of eval() exactly.
class MiEstimator {
public:
  // Ranges come from the given volumes; the moving range should come from
  // the ORIGINAL moving image (interpolated values stay inside it).
  MiEstimator(const Volume &fixed, double moving_min, double moving_max,
              int bins, ParzenWindow window);

  // MI of fixed (bound at construction) vs these warped intensities.
  double eval(const std::vector<double> &warped) const;

  // Also accumulates dMI/d(warped[i]) into dmi (resized and zeroed here).
  double eval_grad(const std::vector<double> &warped,
                   std::vector<double> &dmi) const;

  int bins() const { return bins_; }
  bool degenerate() const { return degenerate_; }

private:
  struct Taps {
    int base;
    double w[4];
    double d1[4];
    int count;
  };
  Taps taps(double value, double lo, double inv_scale) const;
  double mi_from_joint(std::vector<double> &joint, double n) const;

  std::vector<double> fixed_;
  double fix_lo_, fix_scale_; // value -> bin coordinate
  double mov_lo_, mov_scale_;
  int bins_;
  ParzenWindow window_;
  bool degenerate_; // either range empty: MI is 0 by convention
  std::vector<Taps> fixed_taps_; // precomputed, fixed image never changes
};

} // namespace jmorph
