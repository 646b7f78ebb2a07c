#include "manyiv/estimators.hpp"

#include <cmath>
#include <sstream>

#include "manyiv/errors.hpp"

namespace manyiv {
namespace {

void check_lengths(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                   const ProjectionBundle& bundle) {
  if (y.size() != bundle.n() || x.size() != bundle.n())
    throw InvalidInput("estimator input length does not match bundle");
}

void check_denominator(double den, double x_sqnorm, const char* id) {
  if (std::abs(den) < 1e-12 * std::max(x_sqnorm, 1e-300)) {
    std::ostringstream os;
    os << id << ": denominator " << den << " below degeneracy floor";
    throw DegenerateDenominator(os.str());
  }
}

// sum_{i != j} a_i p_ij b_j given the matrix and its diagonal.
double offdiag_form(const Eigen::VectorXd& a, const Eigen::MatrixXd& p,
                    const Eigen::VectorXd& hat, const Eigen::VectorXd& b) {
  return a.dot(p * b) - (hat.array() * a.array() * b.array()).sum();
}

}  // namespace

EstimateOutcome tsls(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                     const ProjectionBundle& bundle) {
  check_lengths(y, x, bundle);
  const bool ctrl = bundle.has_controls();
  const Eigen::VectorXd ye = ctrl ? Eigen::VectorXd(bundle.m_w() * y) : y;
  const Eigen::VectorXd xe = ctrl ? Eigen::VectorXd(bundle.m_w() * x) : x;
  const Eigen::MatrixXd& p = bundle.p_perp();
  const Eigen::VectorXd px = p * xe;
  const double den = xe.dot(px);
  check_denominator(den, xe.squaredNorm(), "tsls");
  EstimateOutcome out;
  out.estimator_id = "tsls";
  out.denominator = den;
  out.beta_hat = px.dot(ye) / den;
  out.diagnostics["residualized"] = ctrl ? "true" : "false";
  return out;
}

namespace {

struct JackknifeParts {
  Eigen::VectorXd ye, xe;
  const Eigen::MatrixXd* p = nullptr;
  const Eigen::VectorXd* hat = nullptr;
  int rank = 0;
  bool ctrl = false;
};

JackknifeParts jackknife_setup(const Eigen::VectorXd& y,
                               const Eigen::VectorXd& x,
                               const ProjectionBundle& bundle,
                               const char* id) {
  check_lengths(y, x, bundle);
  JackknifeParts parts;
  parts.ctrl = bundle.has_controls();
  parts.ye = parts.ctrl ? Eigen::VectorXd(bundle.m_w() * y) : y;
  parts.xe = parts.ctrl ? Eigen::VectorXd(bundle.m_w() * x) : x;
  parts.p = &bundle.p_perp();
  parts.hat = &bundle.hat_p_perp();
  parts.rank = bundle.rank_perp();
  if (parts.rank >= bundle.n()) {
    std::ostringstream os;
    os << id << ": projection is the identity, no off-diagonal terms";
    throw SaturatedFirstStage(os.str());
  }
  return parts;
}

}  // namespace

EstimateOutcome jive2(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle) {
  JackknifeParts parts = jackknife_setup(y, x, bundle, "jive2");
  const Eigen::VectorXd px = *parts.p * parts.xe;
  const auto hat = parts.hat->array();
  const double den =
      px.dot(parts.xe) - (hat * parts.xe.array().square()).sum();
  check_denominator(den, parts.xe.squaredNorm(), "jive2");
  const double num =
      px.dot(parts.ye) - (hat * parts.xe.array() * parts.ye.array()).sum();
  EstimateOutcome out;
  out.estimator_id = "jive2";
  out.denominator = den;
  out.beta_hat = num / den;
  out.diagnostics["residualized"] = parts.ctrl ? "true" : "false";
  out.std_error = jive_se(y, x, bundle, out.beta_hat);
  return out;
}

EstimateOutcome jive1(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                      const ProjectionBundle& bundle) {
  JackknifeParts parts = jackknife_setup(y, x, bundle, "jive1");
  const Eigen::VectorXd& hat = *parts.hat;
  for (int i = 0; i < hat.size(); ++i) {
    if (1.0 - hat(i) <= 1e-10) {
      std::ostringstream os;
      os << "jive1: observation " << i << " is fit exactly (leverage 1)";
      throw SaturatedFirstStage(os.str());
    }
  }
  // Leave-one-out first-stage fit of x at i, then a ratio of inner
  // products of that fit with y and with x.
  const Eigen::VectorXd px = *parts.p * parts.xe;
  const Eigen::ArrayXd loo_fit = (px.array() - hat.array() * parts.xe.array()) /
                                 (1.0 - hat.array());
  const double den = (loo_fit * parts.xe.array()).sum();
  check_denominator(den, parts.xe.squaredNorm(), "jive1");
  const double num = (loo_fit * parts.ye.array()).sum();
  EstimateOutcome out;
  out.estimator_id = "jive1";
  out.denominator = den;
  out.beta_hat = num / den;
  out.diagnostics["residualized"] = parts.ctrl ? "true" : "false";
  out.std_error = jive_se(y, x, bundle, out.beta_hat);
  return out;
}

double jive_se(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
               const ProjectionBundle& bundle, double beta_hat) {
  JackknifeParts parts = jackknife_setup(y, x, bundle, "jive_se");
  const Eigen::MatrixXd& p = *parts.p;
  const auto hat = parts.hat->array();
  const Eigen::VectorXd px = p * parts.xe;
  const double den =
      px.dot(parts.xe) - (hat * parts.xe.array().square()).sum();
  check_denominator(den, parts.xe.squaredNorm(), "jive_se");
  const Eigen::ArrayXd e = parts.ye.array() - beta_hat * parts.xe.array();
  const Eigen::ArrayXd s = px.array() - hat * parts.xe.array();
  const double term1 = (s.square() * e.square()).sum();
  const Eigen::VectorXd t = (parts.xe.array() * e).matrix();
  double term2;
  if (!parts.ctrl) {
    const Eigen::MatrixXd& psq = bundle.p_sq();
    term2 = t.dot(psq * t) -
            (psq.diagonal().array() * t.array().square()).sum();
  } else {
    const Eigen::MatrixXd psq = p.cwiseProduct(p);
    term2 = t.dot(psq * t) -
            (psq.diagonal().array() * t.array().square()).sum();
  }
  const double v = (term1 + term2) / (den * den);
  if (v < 0)
    throw DegenerateDenominator("jive_se: negative variance estimate");
  return std::sqrt(v);
}

EstimateOutcome beta1_ijive(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                            const ProjectionBundle& bundle) {
  JackknifeParts parts = jackknife_setup(y, x, bundle, "beta1");
  const Eigen::VectorXd px = *parts.p * parts.xe;
  const auto hat = parts.hat->array();
  const double den =
      px.dot(parts.xe) - (hat * parts.xe.array().square()).sum();
  check_denominator(den, parts.xe.squaredNorm(), "beta1");
  const double num =
      px.dot(parts.ye) - (hat * parts.xe.array() * parts.ye.array()).sum();
  EstimateOutcome out;
  out.estimator_id = "beta1";
  out.denominator = den;
  out.beta_hat = num / den;
  out.diagnostics["residualized"] = "true";
  return out;
}

EstimateOutcome beta2_naive(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                            const ProjectionBundle& bundle) {
  check_lengths(y, x, bundle);
  const Eigen::MatrixXd& p = bundle.p_perp();
  const Eigen::VectorXd& hat = bundle.hat_p_perp();
  if (bundle.rank_perp() >= bundle.n())
    throw SaturatedFirstStage(
        "beta2: projection is the identity, no off-diagonal terms");
  const Eigen::VectorXd px = p * x;
  const double den =
      px.dot(x) - (hat.array() * x.array().square()).sum();
  check_denominator(den, x.squaredNorm(), "beta2");
  const double num =
      px.dot(y) - (hat.array() * x.array() * y.array()).sum();
  EstimateOutcome out;
  out.estimator_id = "beta2";
  out.denominator = den;
  out.beta_hat = num / den;
  out.diagnostics["residualized"] = "false";
  return out;
}

EstimateOutcome beta3_zero_diag(const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x,
                                const ProjectionBundle& bundle,
                                const ZeroDiagA& zda) {
  check_lengths(y, x, bundle);
  if (zda.a.rows() != bundle.n() || zda.a.cols() != bundle.n())
    throw InvalidInput("beta3: weight matrix size mismatch");
  const double diag_dev = zda.a.diagonal().cwiseAbs().maxCoeff();
  if (diag_dev > 1e-10) {
    std::ostringstream os;
    os << "beta3: weight matrix diagonal deviation " << diag_dev;
    throw InvalidInput(os.str());
  }
  if (!zda.verified && bundle.has_controls()) {
    const double aw = (zda.a * bundle.w_cols()).cwiseAbs().maxCoeff();
    if (aw > 1e-8) {
      std::ostringstream os;
      os << "beta3: weight matrix does not annihilate controls, deviation "
         << aw;
      throw InvalidInput(os.str());
    }
  }
  const Eigen::VectorXd ax = zda.a * x;
  const double den = ax.dot(x);
  check_denominator(den, x.squaredNorm(), "beta3");
  const double num = ax.dot(y);
  EstimateOutcome out;
  out.estimator_id = "beta3";
  out.denominator = den;
  out.beta_hat = num / den;

  const Eigen::ArrayXd e = y.array() - out.beta_hat * x.array();
  const double term1 = (ax.array().square() * e.square()).sum();
  const Eigen::VectorXd t = (x.array() * e).matrix();
  const Eigen::MatrixXd asq = zda.a.cwiseProduct(zda.a);
  const double term2 = t.dot(asq * t);
  const double v = (term1 + term2) / (den * den);
  if (v >= 0) out.std_error = std::sqrt(v);
  return out;
}

EstimateOutcome tsls(const Dataset& ds, const ProjectionBundle& bundle) {
  return tsls(ds.y(), ds.x(), bundle);
}
EstimateOutcome jive1(const Dataset& ds, const ProjectionBundle& bundle) {
  return jive1(ds.y(), ds.x(), bundle);
}
EstimateOutcome jive2(const Dataset& ds, const ProjectionBundle& bundle) {
  return jive2(ds.y(), ds.x(), bundle);
}
EstimateOutcome beta1_ijive(const Dataset& ds, const ProjectionBundle& bundle) {
  return beta1_ijive(ds.y(), ds.x(), bundle);
}
EstimateOutcome beta2_naive(const Dataset& ds, const ProjectionBundle& bundle) {
  return beta2_naive(ds.y(), ds.x(), bundle);
}
EstimateOutcome beta3_zero_diag(const Dataset& ds,
                                const ProjectionBundle& bundle,
                                const ZeroDiagA& zda) {
  return beta3_zero_diag(ds.y(), ds.x(), bundle, zda);
}

}  // namespace manyiv
