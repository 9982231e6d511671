#pragma once

namespace bdrvi {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF. Rational approximation refined by one Halley
/// step; absolute error well below 1e-8 on (0,1).
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

double chi_square_cdf(double df, double x);

/// Inverse chi-square CDF by bisection on the regularized incomplete gamma.
double chi_square_quantile(double df, double p);

enum class TailDistribution { Normal, ChiSquare };

/// Inverse CDF dispatch. `df` is ignored for the normal distribution.
/// Throws InvalidArgument unless p is in (0,1).
double tail_quantile(TailDistribution kind, double p, double df = 0.0);

} // namespace bdrvi
