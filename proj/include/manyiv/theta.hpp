#pragma once

#include <Eigen/Dense>

#include "manyiv/projection.hpp"

namespace manyiv {

// Zero-diagonal instrument weight matrix for designs with controls.
// theta solves (M_W o M_W) theta = diag(P_perp), and
// A = P_perp - M_W diag(theta) M_W, which kills the diagonal by
// construction while A W = 0 is inherited from M_W and P_perp.
// Without controls theta = diag(P) and A is P with the diagonal removed.
struct ZeroDiagA {
  Eigen::MatrixXd a;
  Eigen::VectorXd theta;
  int k_z = 0;             // effective instrument rank backing A
  double min_mw_diag = 1;  // min_i M_W,ii
  double max_theta = 0;
  double max_leverage_ratio = 0;  // max_i P_perp,ii / M_W,ii^2
  // Set by compute_theta after its structural verification passed;
  // consumers re-verify hand-built instances.
  bool verified = false;
};

ZeroDiagA compute_theta(const ProjectionBundle& bundle);

// Balanced-design screen: the weight construction behaves well when no
// observation is too influential in the control fit. Reported, never
// enforced; callers decide what a failure means.
struct Assumption2Report {
  double min_mw_diag = 0;       // pass needs > 0.5
  double min_theta = 0;         // pass needs >= -1e-10
  double max_leverage_ratio = 0;  // pass needs <= 0.99, warn above 0.9
  bool mw_pass = false;
  bool theta_pass = false;
  bool ratio_pass = false;
  bool ratio_warn = false;
  bool pass = false;
};

Assumption2Report check_assumption2(const ProjectionBundle& bundle,
                                    const ZeroDiagA& zda);

}  // namespace manyiv
