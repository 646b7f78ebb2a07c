#pragma once

#include <Eigen/Dense>
#include <vector>

namespace manyiv {

// One cross-section: outcome y, endogenous regressor x, instruments Z,
// exogenous controls W (possibly zero columns). Construction prunes
// collinear columns of W and Z with a rank-revealing pivoted QR, keeping
// the original column indices of the survivors.
class Dataset {
 public:
  static Dataset make(Eigen::VectorXd y, Eigen::VectorXd x, Eigen::MatrixXd z,
                      Eigen::MatrixXd w = Eigen::MatrixXd());

  int n() const { return static_cast<int>(y_.size()); }
  int kz() const { return static_cast<int>(z_.cols()); }
  int kw() const { return static_cast<int>(w_.cols()); }

  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& x() const { return x_; }
  const Eigen::MatrixXd& z() const { return z_; }
  const Eigen::MatrixXd& w() const { return w_; }

  // Original indices of the columns that survived pruning.
  const std::vector<int>& z_retained() const { return z_retained_; }
  const std::vector<int>& w_retained() const { return w_retained_; }

  bool z_pruned() const { return z_pruned_; }
  bool w_pruned() const { return w_pruned_; }

 private:
  Dataset() = default;
  Eigen::VectorXd y_, x_;
  Eigen::MatrixXd z_, w_;
  std::vector<int> z_retained_, w_retained_;
  bool z_pruned_ = false, w_pruned_ = false;
};

}  // namespace manyiv
