#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "manyiv/projection.hpp"
#include "manyiv/theta.hpp"
#include "manyiv/variance.hpp"

namespace manyiv {

enum class Sidedness { kOneSidedUpper, kTwoSided };

enum class PhiChoice { kPhi1, kPhi2, kPhi3 };
enum class PsiChoice { kPsi1, kPsi2 };

struct TestOutcome {
  double statistic = 0.0;
  double p_value = 1.0;
  bool rejected = false;
  Sidedness sidedness = Sidedness::kOneSidedUpper;
  VarianceEstimate normalizer;
  double beta0 = 0.0;
  double alpha = 0.05;
  // "degenerate-normalizer", "zero-implied-error",
  // "assumption2-violation", "squared-mode".
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;
};

// Jack-knife quadratic statistic at the hypothesized coefficient:
//   sum_{i != j} e0_i p_ij e0_j / sqrt(K * normalizer)
// with e0 = y - beta0 x. One-sided upper against the standard normal.
// Requires a bundle without controls (wrap residualized data in a
// projection view on purpose if that is really what you want).
TestOutcome ar_loo(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                   const ProjectionBundle& bundle, double beta0,
                   PhiChoice variance_choice, double alpha = 0.05);

// Jack-knife score statistic:
//   sum_{i != j} e0_i p_ij x_j / sqrt(K * normalizer)
// Two-sided against the standard normal. squared = true reports the
// squared statistic against the chi-square(1) critical value; the
// p-value and decision are identical by construction.
TestOutcome lm_loo(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                   const ProjectionBundle& bundle, double beta0,
                   PsiChoice variance_choice, double alpha = 0.05,
                   bool squared = false);

// Many-controls statistic e0' A e0 / sqrt(K_Z * phi_w). One-sided
// upper. Balanced-design violations are flagged, never blocking.
TestOutcome ar_w(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                 const ProjectionBundle& bundle, const ZeroDiagA& zda,
                 double beta0, double alpha = 0.05);

// Same with the design-level weight matrix precomputed
// (phi_w_weight_matrix), for tight replication loops.
TestOutcome ar_w(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                 const ProjectionBundle& bundle, const ZeroDiagA& zda,
                 double beta0, double alpha,
                 const Eigen::MatrixXd& weights);

struct PretestOutcome {
  double ftilde = 0.0;
  double first_stage_f = 0.0;
  double cutoff = 4.14;
  bool strong = false;  // ftilde > cutoff strictly
  bool approximate = false;  // set when controls were residualized away
};

// First-stage strength screen: the jack-knife first-stage quadratic
// form over its own cross-fit normalizer. Strong means the weak-ID
// robust tests may be swapped for conventional inference.
PretestOutcome pretest_ftilde(const Eigen::VectorXd& x,
                              const ProjectionBundle& bundle,
                              double cutoff = 4.14);

// Residualize-then-screen convenience for data with controls; outcome
// carries the approximate flag.
PretestOutcome pretest_ftilde(const Dataset& ds,
                              const ProjectionBundle& bundle,
                              double cutoff = 4.14);

// Large-sample power of the two tests against a local alternative
// Delta, given the concentration parameter mu2 and true normalizers.
struct PowerPair {
  double ar = 0.0;
  double lm = 0.0;
};
PowerPair theoretical_power(double mu2, int k, double phi, double psi,
                            double delta, double alpha = 0.05);

}  // namespace manyiv
