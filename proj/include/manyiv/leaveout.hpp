#pragma once

#include <Eigen/Dense>
#include <vector>

#include "manyiv/projection.hpp"

namespace manyiv {

// Regression of r on the instrument columns with observation set `drop`
// removed, recovered from full-sample quantities by block downdating.
struct LeaveOutFit {
  // Coefficients on the retained instrument columns; empty when the
  // bundle carries no instrument data (group fast path, wrapped views).
  Eigen::VectorXd delta;
  // Fit Z_j' delta_{-drop} at every observation, dropped ones included.
  Eigen::VectorXd fitted;
  // r - fitted.
  Eigen::VectorXd resid;
};

// Leave-out machinery over one bundle. All quantities come from the
// full-sample projection and annihilator via the dropped-block inverse;
// nothing is refit. Throws RankCollapse when removing `drop` destroys
// the design's rank (det of the dropped annihilator block <= 1e-12).
class LeaveOut {
 public:
  explicit LeaveOut(const ProjectionBundle& bundle);

  // Inverse of M restricted to the dropped rows/columns. |drop| <= 3.
  Eigen::MatrixXd mss_inverse(const std::vector<int>& drop) const;

  // Downdated annihilator element. For a dropped column k the element is
  // the identity column (1 if i == k else 0); for retained k it is
  // M_ik - P_{i,drop} (M_drop,drop)^{-1} P_{drop,k}, which doubles as the
  // prediction-error weight when row i itself is dropped.
  double mtilde(const std::vector<int>& drop, int i, int k) const;
  Eigen::VectorXd mtilde_row(const std::vector<int>& drop, int i) const;

  LeaveOutFit fit(const std::vector<int>& drop,
                  const Eigen::VectorXd& r) const;

 private:
  void validate(const std::vector<int>& drop) const;

  ProjectionBundle bundle_;
  bool has_z_ = false;
  Eigen::LDLT<Eigen::MatrixXd> gram_;  // Z'Z, only when instrument data exist
};

}  // namespace manyiv
