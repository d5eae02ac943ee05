#include "phenotyper/hypothesis.hpp"

#include <algorithm>
#include <cmath>

#include "phenotyper/csv.hpp"
#include "phenotyper/errors.hpp"
#include "phenotyper/lgmm.hpp"
#include "phenotyper/stats.hpp"

namespace phenotyper {

TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw ValidationError("welch_t_test: need at least 2 values per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a), vb = sample_variance(b);
  const double se2 = va / na + vb / nb;

  TestResult res;
  res.method = "welch-t";
  if (se2 <= 0.0) {
    // Both samples constant: equal means are indistinguishable, unequal
    // means are separated with certainty.
    res.degenerate = true;
    res.statistic = 0.0;
    res.p = ma == mb ? 1.0 : 0.0;
    return res;
  }
  res.statistic = (ma - mb) / std::sqrt(se2);
  res.dof = se2 * se2 /
            ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  res.p = 2.0 * (1.0 - student_t_cdf(std::abs(res.statistic), res.dof));
  res.p = std::clamp(res.p, 0.0, 1.0);
  return res;
}

TestResult chi_square_test(const Eigen::MatrixXd& table) {
  const Eigen::Index R = table.rows(), C = table.cols();
  if (R < 2 || C < 2) throw DegenerateTable("chi_square_test: table needs >= 2 rows and columns");
  const double total = table.sum();
  if (total <= 0.0) throw DegenerateTable("chi_square_test: all-zero table");
  const Eigen::VectorXd row_sums = table.rowwise().sum();
  const Eigen::VectorXd col_sums = table.colwise().sum();

  TestResult res;
  res.method = "chi-square";
  double stat = 0.0;
  for (Eigen::Index r = 0; r < R; ++r) {
    for (Eigen::Index c = 0; c < C; ++c) {
      const double expected = row_sums[r] * col_sums[c] / total;
      if (expected <= 0.0) continue;  // empty margin contributes nothing
      const double d = table(r, c) - expected;
      stat += d * d / expected;
    }
  }
  // Degrees of freedom drop with empty margins.
  long eff_r = 0, eff_c = 0;
  for (Eigen::Index r = 0; r < R; ++r)
    if (row_sums[r] > 0.0) ++eff_r;
  for (Eigen::Index c = 0; c < C; ++c)
    if (col_sums[c] > 0.0) ++eff_c;
  if (eff_r < 2 || eff_c < 2) {
    res.degenerate = true;
    res.statistic = 0.0;
    res.p = 1.0;
    return res;
  }
  res.statistic = stat;
  res.dof = static_cast<double>((eff_r - 1) * (eff_c - 1));
  res.p = 1.0 - chi2_cdf(stat, res.dof);
  res.p = std::clamp(res.p, 0.0, 1.0);
  return res;
}

TestResult fisher_exact_2x2(long a, long b, long c, long d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw ValidationError("fisher: negative cell count");
  const long r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d, n = r1 + r2;
  if (n == 0) throw DegenerateTable("fisher: all-zero table");

  auto log_choose = [](long nn, long kk) {
    return std::lgamma(static_cast<double>(nn + 1)) - std::lgamma(static_cast<double>(kk + 1)) -
           std::lgamma(static_cast<double>(nn - kk + 1));
  };
  const double log_denom = log_choose(n, c1);
  auto log_prob = [&](long aa) {
    return log_choose(r1, aa) + log_choose(r2, c1 - aa) - log_denom;
  };

  const double observed = log_prob(a);
  const long lo = std::max(0L, c1 - r2), hi = std::min(r1, c1);
  double p = 0.0;
  for (long aa = lo; aa <= hi; ++aa) {
    const double lp = log_prob(aa);
    if (lp <= observed + 1e-7) p += std::exp(lp);
  }
  TestResult res;
  res.method = "fisher-exact";
  res.statistic = static_cast<double>(a);
  res.p = std::min(p, 1.0);
  return res;
}

namespace {

std::string mean_sd_summary(std::span<const double> v) {
  return format_double(mean(v)) + "(" + format_double(sample_sd(v)) + ")";
}

std::string count_pct_summary(long count, long n) {
  const double pct = n > 0 ? 100.0 * static_cast<double>(count) / static_cast<double>(n) : 0.0;
  return std::to_string(count) + "(" + format_double(pct) + "%)";
}

}  // namespace

ComparisonTable compare_clusters(const Eigen::MatrixXd& X, const std::vector<ColumnInfo>& columns,
                                 const std::vector<int>& labels, int cluster_1, int cluster_2) {
  std::vector<Eigen::Index> rows1, rows2;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (labels[i] == cluster_1) rows1.push_back(i);
    if (labels[i] == cluster_2) rows2.push_back(i);
  }
  if (rows1.size() < 2 || rows2.size() < 2)
    throw ValidationError("compare_clusters: each cluster needs at least 2 rows");

  ComparisonTable table;
  table.n1 = static_cast<long>(rows1.size());
  table.n2 = static_cast<long>(rows2.size());

  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    if (columns[j].kind == FeatureKind::Continuous) {
      std::vector<double> a, b;
      for (Eigen::Index i : rows1) a.push_back(X(i, col));
      for (Eigen::Index i : rows2) b.push_back(X(i, col));
      const TestResult t = welch_t_test(a, b);
      table.rows.push_back({columns[j].name, "", mean_sd_summary(a), mean_sd_summary(b), t.p,
                            sig_code(t.p), t.method});
      continue;
    }

    const int L = columns[j].kind == FeatureKind::Binary ? 2 : std::max(columns[j].n_levels, 1);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(L, 2);
    auto bucket = [&](double v) { return std::clamp(static_cast<int>(std::lround(v)), 0, L - 1); };
    for (Eigen::Index i : rows1) counts(bucket(X(i, col)), 0) += 1.0;
    for (Eigen::Index i : rows2) counts(bucket(X(i, col)), 1) += 1.0;

    TestResult t;
    const double total = counts.sum();
    bool small_expected = false;
    for (int l = 0; l < L; ++l)
      for (int cc = 0; cc < 2; ++cc)
        if (counts.row(l).sum() * counts.col(cc).sum() / total < 5.0) small_expected = true;
    if (L == 2 && small_expected) {
      t = fisher_exact_2x2(static_cast<long>(counts(0, 0)), static_cast<long>(counts(0, 1)),
                           static_cast<long>(counts(1, 0)), static_cast<long>(counts(1, 1)));
    } else {
      t = chi_square_test(counts);
      if (small_expected) t.method += " (small expected counts)";
    }

    if (columns[j].kind == FeatureKind::Binary) {
      table.rows.push_back({columns[j].name, "",
                            count_pct_summary(static_cast<long>(counts(1, 0)), table.n1),
                            count_pct_summary(static_cast<long>(counts(1, 1)), table.n2), t.p,
                            sig_code(t.p), t.method});
    } else {
      for (int l = 0; l < L; ++l) {
        table.rows.push_back({columns[j].name, std::to_string(l),
                              count_pct_summary(static_cast<long>(counts(l, 0)), table.n1),
                              count_pct_summary(static_cast<long>(counts(l, 1)), table.n2), t.p,
                              sig_code(t.p), t.method});
      }
    }
  }
  return table;
}

}  // namespace phenotyper
