#include "manyiv/dataset.hpp"

#include <utility>

#include "manyiv/errors.hpp"
#include "manyiv/projection.hpp"

namespace manyiv {
namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& a,
                               const std::vector<int>& idx) {
  Eigen::MatrixXd out(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t t = 0; t < idx.size(); ++t) out.col(t) = a.col(idx[t]);
  return out;
}

}  // namespace

Dataset Dataset::make(Eigen::VectorXd y, Eigen::VectorXd x, Eigen::MatrixXd z,
                      Eigen::MatrixXd w) {
  const int n = static_cast<int>(y.size());
  if (n == 0) throw InvalidInput("empty sample");
  if (x.size() != n) throw InvalidInput("y and x lengths differ");
  if (z.rows() != n) throw InvalidInput("instrument rows do not match sample");
  if (w.size() == 0) w.resize(n, 0);
  if (w.rows() != n) throw InvalidInput("control rows do not match sample");
  if (!y.allFinite() || !x.allFinite())
    throw InvalidInput("outcome or regressor has non-finite entries");
  if (!z.allFinite()) throw InvalidInput("instruments have non-finite entries");
  if (!w.allFinite()) throw InvalidInput("controls have non-finite entries");

  Dataset ds;
  ds.y_ = std::move(y);
  ds.x_ = std::move(x);

  ds.w_retained_ = independent_columns(w);
  ds.w_pruned_ = static_cast<int>(ds.w_retained_.size()) != w.cols();
  ds.w_ = ds.w_pruned_ ? select_columns(w, ds.w_retained_) : std::move(w);

  ds.z_retained_ = independent_columns(z);
  if (ds.z_retained_.empty())
    throw InvalidInput("instruments have rank zero after pruning");
  ds.z_pruned_ = static_cast<int>(ds.z_retained_.size()) != z.cols();
  ds.z_ = ds.z_pruned_ ? select_columns(z, ds.z_retained_) : std::move(z);

  if (n <= ds.kz() + ds.kw())
    throw InvalidInput(
        "sample size must exceed instrument plus control column count");
  return ds;
}

}  // namespace manyiv
