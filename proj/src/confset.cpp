#include "manyiv/confset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>

#include "manyiv/errors.hpp"
#include "manyiv/estimators.hpp"
#include "manyiv/normal.hpp"
#include "manyiv/variance.hpp"

namespace manyiv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Decision oracle: rejected at this hypothesized value?
using Evaluator = std::function<bool(double)>;

double bisect_boundary(const Evaluator& rejected, double rej, double acc) {
  for (int it = 0; it < 200; ++it) {
    if (std::abs(rej - acc) <=
        1e-6 * std::max({1.0, std::abs(rej), std::abs(acc)}))
      break;
    const double mid = 0.5 * (rej + acc);
    if (mid == rej || mid == acc) break;
    (rejected(mid) ? rej : acc) = mid;
  }
  return 0.5 * (rej + acc);
}

ConfidenceSet grid_engine(const Evaluator& rejected, const GridSpec& spec,
                          double center, double halfwidth, int depth) {
  ConfidenceSet out;
  out.engine = "grid";
  const int npts = std::max(spec.points, 3);
  std::vector<double> beta(npts);
  std::vector<char> rej(npts);
  bool any_accepted = false;
  for (int i = 0; i < npts; ++i) {
    beta[i] = center + halfwidth * (2.0 * i / (npts - 1) - 1.0);
    rej[i] = rejected(beta[i]) ? 1 : 0;
    if (!rej[i]) any_accepted = true;
  }
  if (!any_accepted) {
    // The window may miss the set entirely; probe outward, and restart
    // around the first accepted point found.
    if (depth < 3) {
      for (int k = 1; k <= spec.max_extensions; ++k) {
        const double d = halfwidth * std::ldexp(1.0, k);
        for (const double probe : {center - d, center + d}) {
          if (!rejected(probe))
            return grid_engine(rejected, spec, probe, halfwidth, depth + 1);
        }
      }
    }
    out.empty_set = true;
    return out;
  }

  auto extend = [&](int direction, double edge) {
    // Walk doubling probes away from the window; returns the refined
    // boundary, or an unbounded marker.
    double prev = edge;
    for (int k = 1; k <= spec.max_extensions; ++k) {
      const double probe =
          center + direction * halfwidth * std::ldexp(1.0, k);
      if (rejected(probe))
        return std::pair<bool, double>(true,
                                       bisect_boundary(rejected, probe, prev));
      prev = probe;
    }
    return std::pair<bool, double>(false, 0.0);
  };

  int i = 0;
  while (i < npts) {
    if (rej[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < npts && !rej[j + 1]) ++j;
    Interval iv;
    if (i == 0) {
      const auto [bounded, b] = extend(-1, beta[0]);
      if (bounded) {
        iv.lo = b;
      } else {
        iv.lo_unbounded = true;
        iv.lo = -kInf;
      }
    } else {
      iv.lo = bisect_boundary(rejected, beta[i - 1], beta[i]);
    }
    if (j == npts - 1) {
      const auto [bounded, b] = extend(+1, beta[npts - 1]);
      if (bounded) {
        iv.hi = b;
      } else {
        iv.hi_unbounded = true;
        iv.hi = kInf;
      }
    } else {
      iv.hi = bisect_boundary(rejected, beta[j + 1], beta[j]);
    }
    out.intervals.push_back(iv);
    i = j + 1;
  }
  out.whole_line = out.intervals.size() == 1 &&
                   out.intervals[0].lo_unbounded &&
                   out.intervals[0].hi_unbounded;
  return out;
}

// Real roots of c[0] + c[1] t + ... + c[4] t^4 via the companion matrix
// of the effective-degree polynomial.
std::vector<double> real_roots(const std::array<double, 5>& c) {
  std::vector<double> roots;
  double maxc = 0.0;
  for (const double v : c) maxc = std::max(maxc, std::abs(v));
  if (maxc == 0.0) return roots;
  int deg = 4;
  while (deg > 0 && std::abs(c[deg]) <= 1e-14 * maxc) --deg;
  if (deg == 0) return roots;
  if (deg == 1) {
    roots.push_back(-c[0] / c[1]);
    return roots;
  }
  if (deg == 2) {
    const double disc = c[1] * c[1] - 4.0 * c[2] * c[0];
    if (disc < 0.0) return roots;
    const double sq = std::sqrt(disc);
    const double qq = -0.5 * (c[1] + (c[1] >= 0 ? sq : -sq));
    roots.push_back(qq / c[2]);
    if (qq != 0.0)
      roots.push_back(c[0] / qq);
    else
      roots.push_back(-roots.back());  // c1 == 0 and disc == 0: double 0
    return roots;
  }
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -c[i] / c[deg];
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp);
  for (int i = 0; i < deg; ++i) {
    const std::complex<double> ev = es.eigenvalues()(i);
    if (std::abs(ev.imag()) <= 1e-8 * (1.0 + std::abs(ev.real())))
      roots.push_back(ev.real());
  }
  return roots;
}

// Inversion for statistics of the form num(b) / sqrt(K * vhat(b)) with
// num quadratic and vhat quartic in b: breakpoints can only occur where
// num, vhat - floor, or num^2 - z^2 K vhat change sign, so isolate those
// roots and classify each segment by one direct evaluation.
ConfidenceSet polynomial_engine(const std::array<double, 3>& q,
                                const std::function<double(double)>& vraw,
                                double k, double z, const Evaluator& rejected,
                                double center, double scale) {
  const double c = center, h = scale;
  const double a0 = q[0] + q[1] * c + q[2] * c * c;
  const double a1 = h * (q[1] + 2.0 * q[2] * c);
  const double a2 = h * h * q[2];

  Eigen::Matrix<double, 5, 5> vand;
  Eigen::Matrix<double, 5, 1> vals;
  const double nodes[5] = {-2.0, -1.0, 0.0, 1.0, 2.0};
  for (int r = 0; r < 5; ++r) {
    double t = 1.0;
    for (int col = 0; col < 5; ++col) {
      vand(r, col) = t;
      t *= nodes[r];
    }
    vals(r) = vraw(c + h * nodes[r]);
  }
  const Eigen::Matrix<double, 5, 1> f = vand.fullPivLu().solve(vals);

  const double zk = z * z * k;
  const std::array<double, 5> g = {a0 * a0 - zk * f(0),
                                   2.0 * a0 * a1 - zk * f(1),
                                   a1 * a1 + 2.0 * a0 * a2 - zk * f(2),
                                   2.0 * a1 * a2 - zk * f(3),
                                   a2 * a2 - zk * f(4)};
  const std::array<double, 5> numpoly = {a0, a1, a2, 0.0, 0.0};
  const std::array<double, 5> floorpoly = {f(0) - kVarianceFloor, f(1), f(2),
                                           f(3), f(4)};
  std::vector<double> bps;
  for (const auto& poly : {g, numpoly, floorpoly})
    for (const double rt : real_roots(poly)) bps.push_back(rt);
  std::sort(bps.begin(), bps.end());
  std::vector<double> uniq;
  for (const double v : bps)
    if (uniq.empty() || v - uniq.back() > 1e-11 * (1.0 + std::abs(v)))
      uniq.push_back(v);

  ConfidenceSet out;
  out.engine = "polynomial";
  const auto to_beta = [&](double u) { return c + h * u; };
  if (uniq.empty()) {
    if (!rejected(c)) {
      out.whole_line = true;
      out.intervals.push_back({-kInf, kInf, true, true});
    } else {
      out.empty_set = true;
    }
    return out;
  }
  const int m = static_cast<int>(uniq.size());
  std::vector<double> reps;
  reps.push_back(uniq.front() - 1.0 - 0.1 * std::abs(uniq.front()));
  for (int i = 0; i + 1 < m; ++i) reps.push_back(0.5 * (uniq[i] + uniq[i + 1]));
  reps.push_back(uniq.back() + 1.0 + 0.1 * std::abs(uniq.back()));
  std::vector<char> acc(m + 1);
  for (int i = 0; i <= m; ++i) acc[i] = rejected(to_beta(reps[i])) ? 0 : 1;

  int i = 0;
  while (i <= m) {
    if (!acc[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 <= m && acc[j + 1]) ++j;
    Interval iv;
    if (i == 0) {
      iv.lo_unbounded = true;
      iv.lo = -kInf;
    } else {
      iv.lo = to_beta(uniq[i - 1]);
    }
    if (j == m) {
      iv.hi_unbounded = true;
      iv.hi = kInf;
    } else {
      iv.hi = to_beta(uniq[j]);
    }
    out.intervals.push_back(iv);
    i = j + 1;
  }
  if (out.intervals.empty()) out.empty_set = true;
  out.whole_line = out.intervals.size() == 1 &&
                   out.intervals[0].lo_unbounded &&
                   out.intervals[0].hi_unbounded;
  return out;
}

// sum_{i != j} a_i p_ij b_j over the bundle's projection.
double offdiag_form(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                    const ProjectionBundle& bundle) {
  return a.dot(bundle.p() * b) -
         (bundle.hat_p().array() * a.array() * b.array()).sum();
}

}  // namespace

bool ConfidenceSet::contains(double beta) const {
  for (const auto& iv : intervals) {
    const bool lo_ok = iv.lo_unbounded || beta >= iv.lo;
    const bool hi_ok = iv.hi_unbounded || beta <= iv.hi;
    if (lo_ok && hi_ok) return true;
  }
  return false;
}

ConfidenceSet invert_test(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                          const ProjectionBundle& bundle, ConfSetStat stat,
                          const ConfSetOptions& opt, const ZeroDiagA* zda) {
  if (stat == ConfSetStat::kArW && zda == nullptr)
    throw InvalidInput(
        "invert_test: controls statistic needs the zero-diagonal weights");
  if (stat == ConfSetStat::kLm && opt.engine == ConfSetEngine::kPolynomial)
    throw InvalidInput(
        "invert_test: polynomial engine covers quadratic-form statistics "
        "only; use the grid engine for the score test");

  double center = opt.grid.center;
  double hw = opt.grid.halfwidth;
  if (opt.grid.auto_window) {
    try {
      const EstimateOutcome est = jive2(y, x, bundle);
      center = est.beta_hat;
      hw = 20.0 * est.std_error.value_or(1.0);
    } catch (const Error&) {
      try {
        center = tsls(y, x, bundle).beta_hat;
        hw = std::max(1.0, 0.5 * std::abs(center));
      } catch (const Error&) {
        center = 0.0;
        hw = 1.0;
      }
    }
    hw = std::max(hw, 1e-6 * (1.0 + std::abs(center)));
  }

  Eigen::MatrixXd weights;
  Evaluator rejected;
  std::string id;
  switch (stat) {
    case ConfSetStat::kAr: {
      const char* tag = opt.phi == PhiChoice::kPhi1   ? "ar:phi1"
                        : opt.phi == PhiChoice::kPhi2 ? "ar:phi2"
                                                      : "ar:phi3";
      id = tag;
      rejected = [&y, &x, &bundle, &opt](double b) {
        return ar_loo(y, x, bundle, b, opt.phi, opt.alpha).rejected;
      };
      break;
    }
    case ConfSetStat::kArW: {
      id = "arw";
      weights = phi_w_weight_matrix(bundle, *zda);
      rejected = [&y, &x, &bundle, zda, &opt, &weights](double b) {
        return ar_w(y, x, bundle, *zda, b, opt.alpha, weights).rejected;
      };
      break;
    }
    case ConfSetStat::kLm: {
      id = opt.psi == PsiChoice::kPsi1 ? "lm:psi1" : "lm:psi2";
      rejected = [&y, &x, &bundle, &opt](double b) {
        return lm_loo(y, x, bundle, b, opt.psi, opt.alpha).rejected;
      };
      break;
    }
  }

  const bool use_poly =
      opt.engine == ConfSetEngine::kPolynomial ||
      (opt.engine == ConfSetEngine::kAuto && stat != ConfSetStat::kLm);

  ConfidenceSet out;
  if (!use_poly) {
    out = grid_engine(rejected, opt.grid, center, hw, 0);
  } else {
    std::array<double, 3> q{};
    double k = 0.0;
    std::function<double(double)> vraw;
    if (stat == ConfSetStat::kAr) {
      q = {offdiag_form(y, y, bundle), -2.0 * offdiag_form(x, y, bundle),
           offdiag_form(x, x, bundle)};
      k = bundle.rank_z();
      vraw = [&y, &x, &bundle, &opt](double b) {
        const Eigen::VectorXd e0 = y - b * x;
        switch (opt.phi) {
          case PhiChoice::kPhi1:
            return phi1(e0, bundle).raw;
          case PhiChoice::kPhi2:
            return phi2(e0, bundle).raw;
          default:
            return phi3(e0, bundle).raw;
        }
      };
    } else {
      const Eigen::VectorXd ay = zda->a * y;
      const Eigen::VectorXd ax = zda->a * x;
      q = {y.dot(ay), -2.0 * x.dot(ay), x.dot(ax)};
      k = zda->k_z;
      vraw = [&y, &x, &bundle, zda, &weights](double b) {
        return phi_w(Eigen::VectorXd(y - b * x), bundle, *zda, weights).raw;
      };
    }
    const double z = norm_quantile(1.0 - opt.alpha);
    const double scale = std::max(hw / 4.0, 1e-8 * (1.0 + std::abs(center)));
    out = polynomial_engine(q, vraw, k, z, rejected, center, scale);
  }
  out.alpha = opt.alpha;
  out.test_id = id;
  return out;
}

namespace {

struct Seg {
  double a, b;
};

std::vector<Seg> clip_union(const std::vector<Interval>& v, double lo,
                            double hi) {
  std::vector<Seg> out;
  for (const auto& iv : v) {
    const double a = iv.lo_unbounded ? lo : std::max(iv.lo, lo);
    const double b = iv.hi_unbounded ? hi : std::min(iv.hi, hi);
    if (a <= b) out.push_back({a, b});
  }
  return out;
}

double dist_point(double x, const std::vector<Seg>& v) {
  double d = kInf;
  for (const auto& s : v) {
    if (x < s.a)
      d = std::min(d, s.a - x);
    else if (x > s.b)
      d = std::min(d, x - s.b);
    else
      return 0.0;
  }
  return d;
}

double directed(const std::vector<Seg>& from, const std::vector<Seg>& to) {
  double worst = 0.0;
  for (const auto& s : from) {
    std::vector<double> cand = {s.a, s.b};
    for (std::size_t t = 0; t + 1 < to.size(); ++t) {
      const double mid = 0.5 * (to[t].b + to[t + 1].a);
      if (mid > s.a && mid < s.b) cand.push_back(mid);
    }
    for (const double c : cand) worst = std::max(worst, dist_point(c, to));
  }
  return worst;
}

}  // namespace

double hausdorff_distance(const std::vector<Interval>& a,
                          const std::vector<Interval>& b, double clip_lo,
                          double clip_hi) {
  const std::vector<Seg> ca = clip_union(a, clip_lo, clip_hi);
  const std::vector<Seg> cb = clip_union(b, clip_lo, clip_hi);
  if (ca.empty() && cb.empty()) return 0.0;
  if (ca.empty() || cb.empty()) return kInf;
  return std::max(directed(ca, cb), directed(cb, ca));
}

}  // namespace manyiv
