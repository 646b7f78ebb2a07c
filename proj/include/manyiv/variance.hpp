#pragma once

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <string>

#include "manyiv/projection.hpp"
#include "manyiv/theta.hpp"

namespace manyiv {

// Floor applied to normalizer estimates that can go negative in finite
// samples. The stored value is post-floor; the raw value is kept in
// components["raw"] and the flag tells consuming tests to report a
// degenerate normalizer instead of a huge statistic.
inline constexpr double kVarianceFloor = 1e-12;

struct VarianceEstimate {
  double value = kVarianceFloor;  // max(raw, floor)
  double raw = 0.0;
  bool degenerate = false;  // raw < floor
  std::string estimator_id;
  double beta0 = std::numeric_limits<double>::quiet_NaN();  // set by tests
  std::map<std::string, double> components;
};

// Quadratic-form normalizers for the autoregression-style statistic.
// e0 is the implied error vector at the hypothesized coefficient.

// (2/K) sum_{i != j} p_ij^2 e0_i^2 e0_j^2. Plug-in; overstates the
// normalizer away from the null.
VarianceEstimate phi1(const Eigen::VectorXd& e0,
                      const ProjectionBundle& bundle);

// (2/K) sum_{i != j} [p_ij^2 / (m_ii m_jj + m_ij^2)] q_i q_j with
// q_i = e0_i (M e0)_i. Cross-fit; unbiased under the null.
VarianceEstimate phi2(const Eigen::VectorXd& e0,
                      const ProjectionBundle& bundle);

// Leave-three-out version: (2/K) sum_{i != j} p_ij^2 s_ij where s_ij
// multiplies e0_i e0_j into a sum over k of downdated annihilator
// weights times e0_k times the residual of e0_j after refitting without
// {i,j,k}. O(N^3); callers must pass allow_large for N > 2000.
VarianceEstimate phi3(const Eigen::VectorXd& e0,
                      const ProjectionBundle& bundle,
                      bool allow_large = false);

// Normalizers for the score-style statistic; x is the endogenous
// regressor entering the leave-own-out column sums.
VarianceEstimate psi1(const Eigen::VectorXd& e0, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle);
VarianceEstimate psi2(const Eigen::VectorXd& e0, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle);

// Normalizer for the many-controls statistic built on the zero-diagonal
// weight matrix: (2/K_Z) sum_{i,j} [a_ij^2 / (mzw_ii mzw_jj + mzw_ij^2)]
// shat_i shat_j with shat_i = e0_i (M_ZW e0)_i.
VarianceEstimate phi_w(const Eigen::VectorXd& e0,
                       const ProjectionBundle& bundle, const ZeroDiagA& zda);

// Same, with the observation-pair weight matrix precomputed once per
// design (it does not depend on e0).
VarianceEstimate phi_w(const Eigen::VectorXd& e0,
                       const ProjectionBundle& bundle, const ZeroDiagA& zda,
                       const Eigen::MatrixXd& weights);
Eigen::MatrixXd phi_w_weight_matrix(const ProjectionBundle& bundle,
                                    const ZeroDiagA& zda);

// Infeasible truths for simulation oracles: plug true second moments
// into the displayed formulas. true_psi conditions on the realized x.
double true_phi(const Eigen::VectorXd& sigma2, const ProjectionBundle& bundle);
double true_psi(const Eigen::VectorXd& sigma2, const Eigen::VectorXd& gamma,
                const Eigen::VectorXd& x, const ProjectionBundle& bundle);

}  // namespace manyiv
