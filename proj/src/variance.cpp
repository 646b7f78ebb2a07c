#include "manyiv/variance.hpp"

#include <cmath>
#include <sstream>

#include "manyiv/errors.hpp"

namespace manyiv {
namespace {

VarianceEstimate wrap(double raw, const char* id) {
  VarianceEstimate out;
  out.raw = raw;
  out.value = std::max(raw, kVarianceFloor);
  out.degenerate = raw < kVarianceFloor;
  out.estimator_id = id;
  out.components["raw"] = raw;
  return out;
}

void check_input(const Eigen::VectorXd& e0, const ProjectionBundle& bundle,
                 const char* id) {
  if (e0.size() != bundle.n()) {
    std::ostringstream os;
    os << id << ": error vector length does not match bundle";
    throw InvalidInput(os.str());
  }
  if (bundle.rank_z() == 0) {
    std::ostringstream os;
    os << id << ": instrument rank is zero";
    throw InvalidInput(os.str());
  }
}

void check_annihilator_diag(const Eigen::VectorXd& diag, const char* id) {
  Eigen::Index arg = 0;
  const double lo = diag.minCoeff(&arg);
  if (lo <= 1e-10) {
    std::ostringstream os;
    os << id << ": observation " << arg
       << " is perfectly fit by the instruments (annihilator diagonal "
       << lo << ")";
    throw SaturatedFirstStage(os.str());
  }
}

// sum_{i != j} w_ij a_i b_j for symmetric w, as full form minus diagonal.
double offdiag_quad(const Eigen::MatrixXd& w, const Eigen::VectorXd& a,
                    const Eigen::VectorXd& b) {
  return a.dot(w * b) -
         (w.diagonal().array() * a.array() * b.array()).sum();
}

}  // namespace

VarianceEstimate phi1(const Eigen::VectorXd& e0,
                      const ProjectionBundle& bundle) {
  check_input(e0, bundle, "phi1");
  const double k = bundle.rank_z();
  const Eigen::VectorXd u = e0.array().square().matrix();
  const double raw = (2.0 / k) * offdiag_quad(bundle.p_sq(), u, u);
  return wrap(raw, "phi1");
}

VarianceEstimate phi2(const Eigen::VectorXd& e0,
                      const ProjectionBundle& bundle) {
  check_input(e0, bundle, "phi2");
  check_annihilator_diag(bundle.hat_m(), "phi2");
  const double k = bundle.rank_z();
  const Eigen::VectorXd q =
      (e0.array() * (bundle.m() * e0).array()).matrix();
  // Weight diagonal is zeroed, so the full quadratic form is the
  // off-diagonal sum already.
  const double raw = (2.0 / k) * q.dot(bundle.crossfit_weights() * q);
  return wrap(raw, "phi2");
}

VarianceEstimate phi3(const Eigen::VectorXd& e0,
                      const ProjectionBundle& bundle, bool allow_large) {
  check_input(e0, bundle, "phi3");
  const int n = bundle.n();
  if (n > 2000 && !allow_large)
    throw InvalidInput(
        "phi3: cubic-cost estimator capped at N = 2000; pass allow_large");
  const double k = bundle.rank_z();
  const Eigen::MatrixXd& p = bundle.p();
  const Eigen::MatrixXd& m = bundle.m();
  const Eigen::VectorXd& hm = bundle.hat_m();
  const Eigen::VectorXd ehat = m * e0;

  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* pcol_i = p.col(i).data();
    const double* mcol_i = m.col(i).data();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double pij = pcol_i[j];
      if (pij == 0.0) continue;
      const double* pcol_j = p.col(j).data();
      const double* mcol_j = m.col(j).data();

      const double mii = hm(i), mjj = hm(j), mij = mcol_i[j];
      const double det2 = mii * mjj - mij * mij;
      if (det2 <= 1e-12) {
        std::ostringstream os;
        os << "phi3: rank collapse dropping pair {" << i << "," << j << "}";
        throw RankCollapse(os.str());
      }
      // Inverse of the dropped 2x2 annihilator block.
      const double i11 = mjj / det2, i12 = -mij / det2, i22 = mii / det2;
      // alpha = inv * (ehat_i, ehat_j)
      const double a1 = i11 * ehat(i) + i12 * ehat(j);
      const double a2 = i12 * ehat(i) + i22 * ehat(j);
      // Row combinations for downdated rows i and j.
      const double ci1 = i11 * pcol_i[i] + i12 * pcol_j[i];
      const double ci2 = i12 * pcol_i[i] + i22 * pcol_j[i];
      const double cj1 = i11 * pcol_i[j] + i12 * pcol_j[j];
      const double cj2 = i12 * pcol_i[j] + i22 * pcol_j[j];
      // Residual of e0_j after dropping {i,j}.
      const double r2j = ehat(j) + pcol_i[j] * a1 + pcol_j[j] * a2;

      const double thresh = 1e-12 / det2;
      double inner = e0(i) * r2j;  // k = i term (identity column)
      for (int t = 0; t < n; ++t) {
        if (t == i || t == j) continue;
        const double u = pcol_i[t], v = pcol_j[t];
        const double mrow_i = mcol_i[t] - ci1 * u - ci2 * v;
        if (mrow_i == 0.0) continue;
        const double mdiag = hm(t) - (i11 * u * u + 2.0 * i12 * u * v +
                                      i22 * v * v);
        if (mdiag <= thresh) {
          std::ostringstream os;
          os << "phi3: rank collapse dropping triple {" << i << "," << j
             << "," << t << "}";
          throw RankCollapse(os.str());
        }
        const double mrow_j = mcol_j[t] - cj1 * u - cj2 * v;
        const double r2t = ehat(t) + u * a1 + v * a2;
        const double r3 = r2j - mrow_j * r2t / mdiag;
        inner += mrow_i * e0(t) * r3;
      }
      acc += pij * pij * e0(i) * e0(j) * inner;
    }
  }
  return wrap((2.0 / k) * acc, "phi3");
}

namespace {

// Leave-own-observation column sums s_i = sum_{j != i} p_ij x_j.
Eigen::VectorXd loo_colsum(const Eigen::VectorXd& x,
                           const ProjectionBundle& bundle) {
  return ((bundle.p() * x).array() -
          bundle.hat_p().array() * x.array())
      .matrix();
}

}  // namespace

VarianceEstimate psi1(const Eigen::VectorXd& e0, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle) {
  check_input(e0, bundle, "psi1");
  if (x.size() != bundle.n())
    throw InvalidInput("psi1: regressor length does not match bundle");
  const double k = bundle.rank_z();
  const Eigen::VectorXd s = loo_colsum(x, bundle);
  const double first =
      (e0.array().square() * s.array().square()).sum() / k;
  const Eigen::VectorXd t = (x.array() * e0.array()).matrix();
  const double second = offdiag_quad(bundle.p_sq(), t, t) / k;
  VarianceEstimate out = wrap(first + second, "psi1");
  out.components["first"] = first;
  out.components["second"] = second;
  return out;
}

VarianceEstimate psi2(const Eigen::VectorXd& e0, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle) {
  check_input(e0, bundle, "psi2");
  if (x.size() != bundle.n())
    throw InvalidInput("psi2: regressor length does not match bundle");
  check_annihilator_diag(bundle.hat_m(), "psi2");
  const double k = bundle.rank_z();
  const Eigen::VectorXd me0 = bundle.m() * e0;
  const Eigen::VectorXd s = loo_colsum(x, bundle);
  const double first = ((e0.array() * me0.array() / bundle.hat_m().array()) *
                        s.array().square())
                           .sum() /
                       k;
  const Eigen::VectorXd r = (x.array() * me0.array()).matrix();
  const double second = r.dot(bundle.crossfit_weights() * r) / k;
  VarianceEstimate out = wrap(first + second, "psi2");
  out.components["first"] = first;
  out.components["second"] = second;
  return out;
}

Eigen::MatrixXd phi_w_weight_matrix(const ProjectionBundle& bundle,
                                    const ZeroDiagA& zda) {
  if (zda.a.rows() != bundle.n())
    throw InvalidInput("phi_w: weight matrix size mismatch");
  const Eigen::MatrixXd& mzw = bundle.m_zw();
  const Eigen::VectorXd d = bundle.hat_m_zw();
  check_annihilator_diag(d, "phi_w");
  Eigen::MatrixXd denom = d * d.transpose() + mzw.cwiseProduct(mzw);
  Eigen::Index bi = 0, bj = 0;
  const double dmin = denom.minCoeff(&bi, &bj);
  if (dmin <= 1e-12) {
    std::ostringstream os;
    os << "phi_w: weight denominator " << dmin << " at pair (" << bi << ","
       << bj << ")";
    throw DegenerateDenominator(os.str());
  }
  return zda.a.cwiseProduct(zda.a).cwiseQuotient(denom);
}

VarianceEstimate phi_w(const Eigen::VectorXd& e0,
                       const ProjectionBundle& bundle, const ZeroDiagA& zda,
                       const Eigen::MatrixXd& weights) {
  if (e0.size() != bundle.n())
    throw InvalidInput("phi_w: error vector length does not match bundle");
  if (zda.k_z <= 0) throw InvalidInput("phi_w: zero instrument rank");
  const Eigen::VectorXd shat =
      (e0.array() * (bundle.m_zw() * e0).array()).matrix();
  const double raw = (2.0 / zda.k_z) * shat.dot(weights * shat);
  return wrap(raw, "phi_w");
}

VarianceEstimate phi_w(const Eigen::VectorXd& e0,
                       const ProjectionBundle& bundle, const ZeroDiagA& zda) {
  return phi_w(e0, bundle, zda, phi_w_weight_matrix(bundle, zda));
}

double true_phi(const Eigen::VectorXd& sigma2,
                const ProjectionBundle& bundle) {
  if (sigma2.size() != bundle.n())
    throw InvalidInput("true_phi: variance vector length mismatch");
  const double k = bundle.rank_z();
  return (2.0 / k) * offdiag_quad(bundle.p_sq(), sigma2, sigma2);
}

double true_psi(const Eigen::VectorXd& sigma2, const Eigen::VectorXd& gamma,
                const Eigen::VectorXd& x, const ProjectionBundle& bundle) {
  if (sigma2.size() != bundle.n() || gamma.size() != bundle.n() ||
      x.size() != bundle.n())
    throw InvalidInput("true_psi: input length mismatch");
  const double k = bundle.rank_z();
  const Eigen::VectorXd s = loo_colsum(x, bundle);
  const double first = (sigma2.array() * s.array().square()).sum() / k;
  const double second = offdiag_quad(bundle.p_sq(), gamma, gamma) / k;
  return first + second;
}

}  // namespace manyiv
