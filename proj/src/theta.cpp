#include "manyiv/theta.hpp"

#include <cmath>
#include <sstream>

#include "manyiv/errors.hpp"

namespace manyiv {
namespace {

void verify_zero_diag(const ZeroDiagA& out, const ProjectionBundle& bundle) {
  const double diag_dev = out.a.diagonal().cwiseAbs().maxCoeff();
  if (diag_dev > 1e-10) {
    std::ostringstream os;
    os << "weight matrix diagonal deviation " << diag_dev;
    throw Error(os.str());
  }
  if (bundle.has_controls()) {
    const double aw = (out.a * bundle.w_cols()).cwiseAbs().maxCoeff();
    if (aw > 1e-8) {
      std::ostringstream os;
      os << "weight matrix does not annihilate controls, deviation " << aw;
      throw Error(os.str());
    }
  }
  // Sum of squares identity: sum A_ij^2 = K - sum_k Pperp_kk theta_k.
  const double ssq = out.a.squaredNorm();
  const double predicted =
      static_cast<double>(out.k_z) -
      bundle.hat_p_perp().dot(out.theta);
  if (std::abs(ssq - predicted) > 1e-8 * std::max(1.0, std::abs(predicted))) {
    std::ostringstream os;
    os << "weight matrix sum of squares " << ssq
       << " disagrees with identity value " << predicted;
    throw Error(os.str());
  }
  // The bracket [(1-max theta) K, K] is only guaranteed for nonnegative
  // theta, so enforce it just when theta is nonnegative numerically.
  if (out.theta.minCoeff() >= -1e-10) {
    const double k = static_cast<double>(out.k_z);
    const double lo = (1.0 - out.max_theta) * k;
    if (ssq > k + 1e-8 * k || ssq < lo - 1e-8 * k) {
      std::ostringstream os;
      os << "weight matrix sum of squares " << ssq << " outside ["
         << lo << "," << k << "]";
      throw Error(os.str());
    }
  }
}

}  // namespace

ZeroDiagA compute_theta(const ProjectionBundle& bundle) {
  ZeroDiagA out;
  if (!bundle.has_controls()) {
    out.theta = bundle.hat_p();
    out.a = bundle.p();
    out.a.diagonal().setZero();
    out.k_z = bundle.rank_z();
    out.min_mw_diag = 1.0;
    out.max_theta = out.theta.size() ? out.theta.maxCoeff() : 0.0;
    out.max_leverage_ratio = out.max_theta;
    verify_zero_diag(out, bundle);
    out.verified = true;
    return out;
  }

  const Eigen::MatrixXd& mw = bundle.m_w();
  const Eigen::MatrixXd& pperp = bundle.p_perp();
  const Eigen::VectorXd d = pperp.diagonal();

  Eigen::MatrixXd mw_sq = mw.cwiseProduct(mw);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(mw_sq);
  out.theta = lu.solve(d);
  const double resid = (mw_sq * out.theta - d).cwiseAbs().maxCoeff();
  if (!out.theta.allFinite() || resid > 1e-8) {
    std::ostringstream os;
    os << "theta solve failed, residual " << resid;
    throw Error(os.str());
  }

  out.a = pperp - mw * out.theta.asDiagonal() * mw;
  out.a = 0.5 * (out.a + out.a.transpose()).eval();
  out.k_z = bundle.rank_perp();
  out.min_mw_diag = bundle.hat_m_w().minCoeff();
  out.max_theta = out.theta.maxCoeff();
  const Eigen::VectorXd ratio =
      d.cwiseQuotient(bundle.hat_m_w().cwiseProduct(bundle.hat_m_w()));
  out.max_leverage_ratio = ratio.maxCoeff();
  verify_zero_diag(out, bundle);
  out.verified = true;
  return out;
}

Assumption2Report check_assumption2(const ProjectionBundle& bundle,
                                    const ZeroDiagA& zda) {
  Assumption2Report rep;
  if (bundle.has_controls()) {
    rep.min_mw_diag = bundle.hat_m_w().minCoeff();
    const Eigen::VectorXd ratio = bundle.hat_p_perp().cwiseQuotient(
        bundle.hat_m_w().cwiseProduct(bundle.hat_m_w()));
    rep.max_leverage_ratio = ratio.maxCoeff();
  } else {
    rep.min_mw_diag = 1.0;
    rep.max_leverage_ratio =
        bundle.hat_p().size() ? bundle.hat_p().maxCoeff() : 0.0;
  }
  rep.min_theta = zda.theta.size() ? zda.theta.minCoeff() : 0.0;
  rep.mw_pass = rep.min_mw_diag > 0.5;
  rep.theta_pass = rep.min_theta >= -1e-10;
  rep.ratio_pass = rep.max_leverage_ratio <= 0.99;
  rep.ratio_warn = rep.ratio_pass && rep.max_leverage_ratio > 0.9;
  rep.pass = rep.mw_pass && rep.theta_pass && rep.ratio_pass;
  return rep;
}

}  // namespace manyiv
