#include "manyiv/leaveout.hpp"

#include <algorithm>
#include <sstream>

#include "manyiv/errors.hpp"

namespace manyiv {
namespace {

std::string index_list(const std::vector<int>& drop) {
  std::ostringstream os;
  os << "{";
  for (std::size_t t = 0; t < drop.size(); ++t)
    os << (t ? "," : "") << drop[t];
  os << "}";
  return os.str();
}

}  // namespace

LeaveOut::LeaveOut(const ProjectionBundle& bundle) : bundle_(bundle) {
  const Eigen::MatrixXd& z = bundle_.z_cols();
  has_z_ = z.cols() > 0;
  if (has_z_) gram_.compute(z.transpose() * z);
}

void LeaveOut::validate(const std::vector<int>& drop) const {
  if (drop.size() > 3)
    throw InvalidInput("leave-out supports at most three dropped rows");
  const int n = bundle_.n();
  for (std::size_t a = 0; a < drop.size(); ++a) {
    if (drop[a] < 0 || drop[a] >= n)
      throw InvalidInput("leave-out index out of range");
    for (std::size_t b = a + 1; b < drop.size(); ++b)
      if (drop[a] == drop[b])
        throw InvalidInput("leave-out indices must be distinct");
  }
}

Eigen::MatrixXd LeaveOut::mss_inverse(const std::vector<int>& drop) const {
  validate(drop);
  const int s = static_cast<int>(drop.size());
  const Eigen::MatrixXd& m = bundle_.m();
  Eigen::MatrixXd mss(s, s);
  for (int a = 0; a < s; ++a)
    for (int b = 0; b < s; ++b) mss(a, b) = m(drop[a], drop[b]);
  const double det = s == 0 ? 1.0 : mss.determinant();
  if (det <= 1e-12)
    throw RankCollapse("rank collapse dropping rows " + index_list(drop));
  if (s == 0) return mss;
  return mss.inverse();
}

double LeaveOut::mtilde(const std::vector<int>& drop, int i, int k) const {
  return mtilde_row(drop, i)(k);
}

Eigen::VectorXd LeaveOut::mtilde_row(const std::vector<int>& drop,
                                     int i) const {
  const Eigen::MatrixXd& m = bundle_.m();
  const Eigen::MatrixXd& p = bundle_.p();
  Eigen::VectorXd row = m.row(i);
  if (!drop.empty()) {
    const Eigen::MatrixXd inv = mss_inverse(drop);
    const int s = static_cast<int>(drop.size());
    Eigen::VectorXd pis(s);
    for (int a = 0; a < s; ++a) pis(a) = p(i, drop[a]);
    const Eigen::VectorXd coef = inv * pis;
    for (int a = 0; a < s; ++a) row -= coef(a) * p.col(drop[a]);
    // Dropped columns follow the identity convention.
    for (int a = 0; a < s; ++a) row(drop[a]) = (i == drop[a]) ? 1.0 : 0.0;
  }
  return row;
}

LeaveOutFit LeaveOut::fit(const std::vector<int>& drop,
                          const Eigen::VectorXd& r) const {
  validate(drop);
  if (r.size() != bundle_.n())
    throw InvalidInput("leave-out fit: vector length mismatch");
  const Eigen::MatrixXd& p = bundle_.p();
  LeaveOutFit out;
  out.fitted = p * r;
  Eigen::VectorXd alpha;  // (M_SS)^{-1} (M r)_S
  if (!drop.empty()) {
    const Eigen::MatrixXd inv = mss_inverse(drop);
    const int s = static_cast<int>(drop.size());
    Eigen::VectorXd rhat_s(s);
    for (int a = 0; a < s; ++a) rhat_s(a) = r(drop[a]) - out.fitted(drop[a]);
    alpha = inv * rhat_s;
    for (int a = 0; a < s; ++a) out.fitted -= alpha(a) * p.col(drop[a]);
  }
  out.resid = r - out.fitted;
  if (has_z_) {
    const Eigen::MatrixXd& z = bundle_.z_cols();
    Eigen::VectorXd rhs = z.transpose() * r;
    for (std::size_t a = 0; a < drop.size(); ++a)
      rhs -= alpha(static_cast<int>(a)) * z.row(drop[a]).transpose();
    out.delta = gram_.solve(rhs);
  }
  return out;
}

}  // namespace manyiv
