#include "manyiv/normal.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "manyiv/errors.hpp"

namespace manyiv {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double norm_pdf(double x) {
  static const double inv_sqrt2pi = 0.3989422804014326779;
  return inv_sqrt2pi * std::exp(-0.5 * x * x);
}

// Acklam's rational approximation refined by one Halley step on the CDF.
double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("norm_quantile: p must lie in (0,1)");

  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};

  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  double e = norm_cdf(x) - p;
  double u = e / norm_pdf(x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double ks_distance_uniform(const double* data, int n) {
  std::vector<double> v(data, data + n);
  for (double& t : v) t = std::clamp(t, 0.0, 1.0);
  std::sort(v.begin(), v.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    double lo = static_cast<double>(i) / n;
    double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(v[i] - lo, hi - v[i]));
  }
  return d;
}

// Solves 2 * sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2) = alpha by bisection,
// then rescales by sqrt(n).
double ks_critical_uniform(int n, double alpha) {
  if (n <= 0 || alpha <= 0.0 || alpha >= 1.0)
    throw InvalidInput("ks_critical_uniform: bad arguments");
  auto tail = [](double x) {
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
      double term = 2.0 * std::exp(-2.0 * k * k * x * x);
      s += (k % 2 == 1) ? term : -term;
      if (term < 1e-16) break;
    }
    return s;
  };
  double lo = 0.2, hi = 4.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (tail(mid) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi) / std::sqrt(static_cast<double>(n));
}

}  // namespace manyiv
