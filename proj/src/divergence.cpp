#include "phenotyper/divergence.hpp"

#include <algorithm>
#include <cmath>

#include "phenotyper/errors.hpp"

namespace phenotyper {

double kld_gaussian_1d(double mean_p, double var_p, double mean_q, double var_q) {
  if (var_p <= 0.0 || var_q <= 0.0) throw ZeroVariance("kld_gaussian_1d: variance must be > 0");
  const double dm = mean_p - mean_q;
  return 0.5 * std::log(var_q / var_p) + (var_p + dm * dm) / (2.0 * var_q) - 0.5;
}

namespace {

std::pair<double, double> mle_gaussian(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, ss / static_cast<double>(v.size())};
}

}  // namespace

KldReport per_feature_kld(const Eigen::MatrixXd& X, const std::vector<ColumnInfo>& columns,
                          const std::vector<int>& labels, int cluster_1, int cluster_2) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows())
    throw LengthMismatch("per_feature_kld: labels/rows length mismatch");
  std::vector<Eigen::Index> rows1, rows2;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (labels[i] == cluster_1) rows1.push_back(i);
    if (labels[i] == cluster_2) rows2.push_back(i);
  }
  if (rows1.empty() || rows2.empty())
    throw ValidationError("per_feature_kld: both clusters must be non-empty");

  KldReport report;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    KldRow row;
    row.feature = columns[j].name;
    if (columns[j].kind == FeatureKind::Continuous) {
      std::vector<double> a, b;
      for (Eigen::Index i : rows1) a.push_back(X(i, col));
      for (Eigen::Index i : rows2) b.push_back(X(i, col));
      auto [m1, v1] = mle_gaussian(a);
      auto [m2, v2] = mle_gaussian(b);
      double lo = X(rows1[0], col), hi = lo;
      for (Eigen::Index i : rows1) {
        lo = std::min(lo, X(i, col));
        hi = std::max(hi, X(i, col));
      }
      for (Eigen::Index i : rows2) {
        lo = std::min(lo, X(i, col));
        hi = std::max(hi, X(i, col));
      }
      const double range = hi - lo;
      const double floor = range > 0.0 ? 1e-12 * range * range : 1e-12;
      row.kld = kld_gaussian_1d(m1, std::max(v1, floor), m2, std::max(v2, floor));
      row.method = "gaussian";
    } else {
      const int L = columns[j].kind == FeatureKind::Binary ? 2 : std::max(columns[j].n_levels, 1);
      std::vector<double> c1(L, 0.0), c2(L, 0.0);
      auto bucket = [&](double v) {
        int code = static_cast<int>(std::lround(v));
        return std::clamp(code, 0, L - 1);
      };
      for (Eigen::Index i : rows1) c1[bucket(X(i, col))] += 1.0;
      for (Eigen::Index i : rows2) c2[bucket(X(i, col))] += 1.0;
      const double add = 1.0 / static_cast<double>(L);
      const double n1 = static_cast<double>(rows1.size()) + 1.0;
      const double n2 = static_cast<double>(rows2.size()) + 1.0;
      double kl = 0.0;
      for (int l = 0; l < L; ++l) {
        const double p = (c1[l] + add) / n1;
        const double q = (c2[l] + add) / n2;
        kl += p * std::log(p / q);
      }
      row.kld = kl;
      row.method = "discrete";
    }
    report.rows.push_back(std::move(row));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const KldRow& a, const KldRow& b) { return a.kld > b.kld; });
  return report;
}

}  // namespace phenotyper
