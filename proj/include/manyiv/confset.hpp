#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "manyiv/projection.hpp"
#include "manyiv/stattests.hpp"
#include "manyiv/theta.hpp"

namespace manyiv {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_unbounded = false;
  bool hi_unbounded = false;
};

struct ConfidenceSet {
  std::vector<Interval> intervals;  // disjoint, ascending
  bool whole_line = false;
  bool empty_set = false;
  double alpha = 0.05;
  std::string test_id;
  std::string engine;  // "grid" | "polynomial"

  bool contains(double beta) const;
};

enum class ConfSetStat { kAr, kArW, kLm };
enum class ConfSetEngine { kAuto, kGrid, kPolynomial };

struct GridSpec {
  int points = 2001;
  // Window defaults to the jack-knife point estimate +- 20 standard
  // errors when auto_window is set; otherwise center/halfwidth rule.
  bool auto_window = true;
  double center = 0.0;
  double halfwidth = 1.0;
  // Tail probes double the distance from the center this many times
  // before a still-unrejected direction is declared unbounded.
  int max_extensions = 30;
};

struct ConfSetOptions {
  double alpha = 0.05;
  ConfSetEngine engine = ConfSetEngine::kAuto;
  PhiChoice phi = PhiChoice::kPhi2;
  PsiChoice psi = PsiChoice::kPsi2;
  GridSpec grid;
};

// Collects the hypothesized coefficients not rejected by the chosen
// test. The grid engine brackets sign changes and refines endpoints by
// bisection to 1e-6 relative. The polynomial engine (quadratic-form
// statistics only) writes the rejection boundary as a polynomial in the
// hypothesized value, isolates its real roots, and classifies the
// segments between them by direct evaluation; unbounded directions are
// exact. zda is required for the controls statistic.
ConfidenceSet invert_test(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                          const ProjectionBundle& bundle, ConfSetStat stat,
                          const ConfSetOptions& opt = {},
                          const ZeroDiagA* zda = nullptr);

// Hausdorff distance between two interval unions after clipping both to
// [clip_lo, clip_hi]. Infinity when exactly one clipped union is empty.
double hausdorff_distance(const std::vector<Interval>& a,
                          const std::vector<Interval>& b, double clip_lo,
                          double clip_hi);

}  // namespace manyiv
