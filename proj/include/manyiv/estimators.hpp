#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>

#include "manyiv/dataset.hpp"
#include "manyiv/projection.hpp"
#include "manyiv/theta.hpp"

namespace manyiv {

struct EstimateOutcome {
  double beta_hat = 0.0;
  std::optional<double> std_error;
  std::string estimator_id;
  double denominator = 0.0;  // quadratic form under beta_hat
  std::map<std::string, std::string> diagnostics;
};

// Ratio estimators of the endogenous coefficient. Every function takes
// raw y and x; when the bundle carries controls the inputs are
// residualized internally where the estimator calls for it and the
// instrument projection is replaced by its residualized counterpart.
// Degenerate denominators (|den| < 1e-12 * ||x||^2 for the x entering
// the quadratic form) throw DegenerateDenominator.

EstimateOutcome tsls(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                     const ProjectionBundle& bundle);

// Jack-knife with row weights p_ij / (1 - p_ii) and zero diagonal,
// oriented so the numerator is sum_i y_i * loo_fit_i with loo_fit the
// leave-one-out first-stage fit of x at i.
EstimateOutcome jive1(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle);

// Jack-knife with the diagonal of p removed and no re-weighting.
EstimateOutcome jive2(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle);

// Heteroskedasticity-robust standard error for the jack-knife ratio
// with denominator D = sum_{i != j} p_ij x_i x_j:
//   V = D^-2 [ sum_i s_i^2 r_i^2 + sum_{i != j} p_ij^2 x_i r_i x_j r_j ]
// with s_i the leave-own-observation column sum sum_{j != i} p_ij x_j
// and r = y - beta_hat x. Throws when V < 0.
double jive_se(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
               const ProjectionBundle& bundle, double beta_hat);

// Residualize both sides by the controls, then jack-knife on the
// residualized instrument projection. Biased when controls are many;
// provided for comparison runs.
EstimateOutcome beta1_ijive(const Eigen::VectorXd& y,
                            const Eigen::VectorXd& x,
                            const ProjectionBundle& bundle);

// Raw (un-residualized) data with the diagonal-removed residualized
// instrument projection. Also biased with many controls.
EstimateOutcome beta2_naive(const Eigen::VectorXd& y,
                            const Eigen::VectorXd& x,
                            const ProjectionBundle& bundle);

// x' A y / x' A x with the zero-diagonal weight matrix. Verifies the
// structural properties of A (zero diagonal, annihilates controls)
// before using it. Standard error uses the jack-knife form with A
// replacing the off-diagonal projection weights.
EstimateOutcome beta3_zero_diag(const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x,
                                const ProjectionBundle& bundle,
                                const ZeroDiagA& zda);

// Dataset conveniences.
EstimateOutcome tsls(const Dataset& ds, const ProjectionBundle& bundle);
EstimateOutcome jive1(const Dataset& ds, const ProjectionBundle& bundle);
EstimateOutcome jive2(const Dataset& ds, const ProjectionBundle& bundle);
EstimateOutcome beta1_ijive(const Dataset& ds, const ProjectionBundle& bundle);
EstimateOutcome beta2_naive(const Dataset& ds, const ProjectionBundle& bundle);
EstimateOutcome beta3_zero_diag(const Dataset& ds,
                                const ProjectionBundle& bundle,
                                const ZeroDiagA& zda);

}  // namespace manyiv
