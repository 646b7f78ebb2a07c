#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "manyiv/dataset.hpp"

namespace manyiv {

// Orthogonal projection onto the column span of a matrix.
// rank is decided by a pivoted QR: column j is kept while the j-th
// diagonal of R exceeds 1e-10 times the largest one. retained holds the
// original indices of the independent columns, sorted ascending.
struct ProjectionResult {
  Eigen::MatrixXd p;
  int rank = 0;
  std::vector<int> retained;
};

ProjectionResult build_projection(const Eigen::MatrixXd& cols);

// Indices (ascending) of a maximal linearly independent subset of
// columns, under the same pivoted-QR tolerance build_projection uses.
std::vector<int> independent_columns(const Eigen::MatrixXd& cols);

// Residual maker: returns annihilator * v, provided for readability at
// call sites that mix projections and residualizations.
Eigen::VectorXd residualize(const Eigen::MatrixXd& annihilator,
                            const Eigen::VectorXd& v);
Eigen::MatrixXd residualize(const Eigen::MatrixXd& annihilator,
                            const Eigen::MatrixXd& v);

// Leverage screen on the instrument projection: tests whose large-sample
// behaviour needs no single observation to dominate require
// max_i P_ii <= delta with delta < 1.
struct BalanceReport {
  double max_leverage = 0.0;
  int argmax = -1;
  bool pass = false;  // max leverage <= 0.99
  bool warn = false;  // pass, but max leverage > 0.9
};

// All projections a fitted model needs, built lazily and shared.
// With controls the instruments are first residualized by W, so
//   p()       projects on raw Z,
//   m()       = I - p(),
//   m_w()     annihilates W,
//   p_perp()  projects on M_W Z (rank after residualization),
//   m_zw()    annihilates [Z W].
// Without controls p_perp() aliases p() and m_zw() aliases m().
// Copies are cheap handles onto one immutable implementation.
class ProjectionBundle {
 public:
  static ProjectionBundle build(const Dataset& ds);

  // Group-indicator design: instruments are dummies for the given
  // membership (values 0..G-1). The projection entries are written
  // exactly as 1/n_g with no factorization, and no control block exists.
  static ProjectionBundle from_groups(const std::vector<int>& membership);

  // Wraps an existing projection as a bundle with no controls. Used when
  // a statistic defined for the no-controls layout is applied on purpose
  // to residualized data but with a projection computed elsewhere.
  static ProjectionBundle from_projection(Eigen::MatrixXd p, int rank);

  int n() const;
  bool has_controls() const;

  const Eigen::MatrixXd& p() const;
  const Eigen::MatrixXd& m() const;
  const Eigen::MatrixXd& p_perp() const;
  const Eigen::MatrixXd& m_w() const;   // requires has_controls()
  const Eigen::MatrixXd& m_zw() const;  // annihilator of [Z W]

  const Eigen::VectorXd& hat_p() const;       // diag of p()
  const Eigen::VectorXd& hat_m() const;       // diag of m()
  const Eigen::VectorXd& hat_p_perp() const;  // diag of p_perp()
  const Eigen::VectorXd& hat_m_w() const;     // requires has_controls()
  const Eigen::VectorXd& hat_m_zw() const;    // diag of m_zw()

  int rank_z() const;     // rank of Z
  int rank_w() const;     // rank of W (0 when absent)
  int rank_perp() const;  // rank of M_W Z
  int rank_zw() const;    // rank of [Z W]

  // Retained instrument columns (post-pruning) and control columns;
  // empty for the group fast path and projection views.
  const Eigen::MatrixXd& z_cols() const;
  const Eigen::MatrixXd& w_cols() const;

  // Group membership when built via from_groups, else nullptr.
  const std::vector<int>* groups() const;

  // Elementwise square of p(), cached. Hot input to quadratic-form
  // variance formulas.
  const Eigen::MatrixXd& p_sq() const;

  // Cross-fit weights p_ij^2 / (m_ii m_jj + m_ij^2), cached; the diagonal
  // is zeroed. Throws if some m_ii m_jj + m_ij^2 is numerically zero.
  const Eigen::MatrixXd& crossfit_weights() const;

  BalanceReport balance_check() const;

 private:
  struct Impl;
  explicit ProjectionBundle(std::shared_ptr<Impl> impl);
  std::shared_ptr<Impl> impl_;
};

}  // namespace manyiv
