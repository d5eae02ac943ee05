#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

namespace phenotyper {

// Numerically stable 1/(1+exp(-x)).
inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Stable log(1+exp(x)).
inline double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double logsumexp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample variance, n-1 denominator; 0 for n < 2.
inline double sample_variance(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(n - 1);
}

inline double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

// Standard normal CDF.
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Two-sided normal tail probability of a z statistic.
inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

// Chi-square distribution (dof > 0); backed by Boost.Math in stats.cpp.
double chi2_cdf(double x, double dof);
double chi2_quantile(double p, double dof);

// Student-t CDF (dof > 0).
double student_t_cdf(double x, double dof);

// Gauss-Hermite rule for integrals of exp(-x^2) f(x); physicists' convention.
// Computed by the Golub-Welsch eigen decomposition of the Jacobi matrix.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussHermiteRule gauss_hermite(int n);

// z-score columns in place; constant columns are left centered at zero.
// Returns per-column (mean, sd) with sd = 1 recorded for constant columns.
struct ColumnScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};
ColumnScaling standardize_columns(Eigen::MatrixXd& m);

}  // namespace phenotyper
