#include "phenotyper/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "phenotyper/errors.hpp"

namespace phenotyper {

double chi2_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(dist, x);
}

double chi2_quantile(double p, double dof) {
  boost::math::chi_squared dist(dof);
  return boost::math::quantile(dist, p);
}

double student_t_cdf(double x, double dof) {
  boost::math::students_t dist(dof);
  return boost::math::cdf(dist, x);
}

GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw ValidationError("gauss_hermite: need at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermiteRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    rule.weights[k] = sqrt_pi * v0 * v0;
  }
  return rule;
}

ColumnScaling standardize_columns(Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows(), p = m.cols();
  ColumnScaling sc;
  sc.mean.resize(p);
  sc.sd.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mu = m.col(j).mean();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ss += (m(i, j) - mu) * (m(i, j) - mu);
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    sc.mean[j] = mu;
    if (sd < 1e-12) {
      sc.sd[j] = 1.0;
      m.col(j).array() -= mu;
    } else {
      sc.sd[j] = sd;
      m.col(j) = (m.col(j).array() - mu) / sd;
    }
  }
  return sc;
}

}  // namespace phenotyper
