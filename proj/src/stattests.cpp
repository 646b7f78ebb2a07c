#include "manyiv/stattests.hpp"

#include <algorithm>
#include <cmath>

#include "manyiv/errors.hpp"
#include "manyiv/normal.hpp"

namespace manyiv {
namespace {

void check_no_controls(const ProjectionBundle& bundle, const char* id) {
  if (bundle.has_controls())
    throw InvalidInput(std::string(id) +
                       ": defined for bundles without controls; use the "
                       "controls-aware statistic or a projection view");
}

Eigen::VectorXd implied_errors(const Eigen::VectorXd& y,
                               const Eigen::VectorXd& x, double beta0) {
  if (y.size() != x.size())
    throw InvalidInput("implied errors: length mismatch");
  return y - beta0 * x;
}

// Fills p-value / decision given the statistic and sidedness, honoring
// degeneracy flags that force non-rejection.
void finalize(TestOutcome& out) {
  const bool degen = out.normalizer.degenerate;
  if (degen) {
    out.flags.push_back("degenerate-normalizer");
    out.statistic = 0.0;
    out.p_value = 1.0;
    out.rejected = false;
    return;
  }
  if (out.sidedness == Sidedness::kOneSidedUpper)
    out.p_value = norm_sf(out.statistic);
  else
    out.p_value = 2.0 * norm_sf(std::abs(out.statistic));
  out.rejected = out.p_value < out.alpha;
}

}  // namespace

bool TestOutcome::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

TestOutcome ar_loo(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                   const ProjectionBundle& bundle, double beta0,
                   PhiChoice variance_choice, double alpha) {
  check_no_controls(bundle, "ar_loo");
  TestOutcome out;
  out.sidedness = Sidedness::kOneSidedUpper;
  out.beta0 = beta0;
  out.alpha = alpha;
  const Eigen::VectorXd e0 = implied_errors(y, x, beta0);
  switch (variance_choice) {
    case PhiChoice::kPhi1:
      out.normalizer = phi1(e0, bundle);
      break;
    case PhiChoice::kPhi2:
      out.normalizer = phi2(e0, bundle);
      break;
    case PhiChoice::kPhi3:
      out.normalizer = phi3(e0, bundle);
      break;
  }
  out.normalizer.beta0 = beta0;
  if (e0.cwiseAbs().maxCoeff() == 0.0) {
    out.flags.push_back("zero-implied-error");
    out.statistic = 0.0;
    out.p_value = 1.0;
    out.rejected = false;
    return out;
  }
  const double k = bundle.rank_z();
  const double num = e0.dot(bundle.p() * e0) -
                     (bundle.hat_p().array() * e0.array().square()).sum();
  out.statistic = num / std::sqrt(k * out.normalizer.value);
  finalize(out);
  return out;
}

TestOutcome lm_loo(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                   const ProjectionBundle& bundle, double beta0,
                   PsiChoice variance_choice, double alpha, bool squared) {
  check_no_controls(bundle, "lm_loo");
  TestOutcome out;
  out.sidedness = Sidedness::kTwoSided;
  out.beta0 = beta0;
  out.alpha = alpha;
  const Eigen::VectorXd e0 = implied_errors(y, x, beta0);
  out.normalizer = variance_choice == PsiChoice::kPsi1
                       ? psi1(e0, x, bundle)
                       : psi2(e0, x, bundle);
  out.normalizer.beta0 = beta0;
  if (e0.cwiseAbs().maxCoeff() == 0.0) {
    out.flags.push_back("zero-implied-error");
    out.statistic = 0.0;
    out.p_value = 1.0;
    out.rejected = false;
    return out;
  }
  const double k = bundle.rank_z();
  const double num = e0.dot(bundle.p() * x) -
                     (bundle.hat_p().array() * e0.array() * x.array()).sum();
  out.statistic = num / std::sqrt(k * out.normalizer.value);
  finalize(out);
  if (squared && !out.normalizer.degenerate) {
    // Equivalent mode: squared statistic against chi-square(1); the
    // p-value is unchanged because the null is symmetric.
    out.statistic = out.statistic * out.statistic;
    out.flags.push_back("squared-mode");
  }
  return out;
}

TestOutcome ar_w(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                 const ProjectionBundle& bundle, const ZeroDiagA& zda,
                 double beta0, double alpha,
                 const Eigen::MatrixXd& weights) {
  TestOutcome out;
  out.sidedness = Sidedness::kOneSidedUpper;
  out.beta0 = beta0;
  out.alpha = alpha;
  const Eigen::VectorXd e0 = implied_errors(y, x, beta0);
  out.normalizer = phi_w(e0, bundle, zda, weights);
  out.normalizer.beta0 = beta0;
  const Assumption2Report a2 = check_assumption2(bundle, zda);
  if (!a2.pass) out.flags.push_back("assumption2-violation");
  if (e0.cwiseAbs().maxCoeff() == 0.0) {
    out.flags.push_back("zero-implied-error");
    out.statistic = 0.0;
    out.p_value = 1.0;
    out.rejected = false;
    return out;
  }
  const double num = e0.dot(zda.a * e0);
  out.statistic = num / std::sqrt(static_cast<double>(zda.k_z) *
                                  out.normalizer.value);
  finalize(out);
  return out;
}

TestOutcome ar_w(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                 const ProjectionBundle& bundle, const ZeroDiagA& zda,
                 double beta0, double alpha) {
  return ar_w(y, x, bundle, zda, beta0, alpha,
              phi_w_weight_matrix(bundle, zda));
}

PretestOutcome pretest_ftilde(const Eigen::VectorXd& x,
                              const ProjectionBundle& bundle,
                              double cutoff) {
  check_no_controls(bundle, "pretest");
  if (x.size() != bundle.n())
    throw InvalidInput("pretest: regressor length does not match bundle");
  PretestOutcome out;
  out.cutoff = cutoff;
  const double k = bundle.rank_z();
  const double n = bundle.n();
  const Eigen::VectorXd px = bundle.p() * x;
  const double quad = px.dot(x);
  const double num =
      quad - (bundle.hat_p().array() * x.array().square()).sum();
  const VarianceEstimate ups = phi2(x, bundle);
  if (ups.degenerate)
    throw DegenerateDenominator("pretest: first-stage normalizer degenerate");
  out.ftilde = num / std::sqrt(k * ups.value);
  const double mx = x.squaredNorm() - quad;
  if (n > k && mx > 0)
    out.first_stage_f = (quad / k) / (mx / (n - k));
  out.strong = out.ftilde > cutoff;
  return out;
}

PretestOutcome pretest_ftilde(const Dataset& ds,
                              const ProjectionBundle& bundle,
                              double cutoff) {
  if (!bundle.has_controls()) return pretest_ftilde(ds.x(), bundle, cutoff);
  ProjectionBundle view =
      ProjectionBundle::from_projection(bundle.p_perp(), bundle.rank_perp());
  PretestOutcome out = pretest_ftilde(
      Eigen::VectorXd(bundle.m_w() * ds.x()), view, cutoff);
  out.approximate = true;
  return out;
}

PowerPair theoretical_power(double mu2, int k, double phi, double psi,
                            double delta, double alpha) {
  if (phi <= 0 || psi <= 0)
    throw InvalidInput("theoretical power needs positive normalizers");
  if (k <= 0) throw InvalidInput("theoretical power needs k >= 1");
  PowerPair out;
  const double rk = std::sqrt(static_cast<double>(k));
  const double z1 = norm_quantile(1.0 - alpha);
  const double ar_shift = delta * delta * mu2 / (rk * std::sqrt(phi));
  out.ar = norm_sf(z1 - ar_shift);
  const double z2 = norm_quantile(1.0 - alpha / 2.0);
  const double lm_shift = delta * mu2 / (rk * std::sqrt(psi));
  out.lm = norm_sf(z2 - lm_shift) + norm_cdf(-z2 - lm_shift);
  return out;
}

}  // namespace manyiv
