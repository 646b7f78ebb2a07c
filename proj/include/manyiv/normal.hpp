#pragma once

namespace manyiv {

// Standard normal CDF.
double norm_cdf(double x);

// Upper tail probability, 1 - Phi(x), computed without cancellation.
double norm_sf(double x);

// Quantile function. Throws InvalidInput for p outside (0, 1).
double norm_quantile(double p);

// Standard normal density.
double norm_pdf(double x);

// One-sample Kolmogorov-Smirnov distance against Uniform[0,1].
// Values outside [0,1] are clamped before sorting.
double ks_distance_uniform(const double* data, int n);

// Asymptotic Kolmogorov critical value: d such that P(sqrt(n) D_n > d*sqrt(n))
// is approximately alpha. Returns the threshold on D_n itself.
double ks_critical_uniform(int n, double alpha);

}  // namespace manyiv
