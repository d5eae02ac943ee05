#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "phenotyper/preprocess.hpp"

namespace phenotyper {

struct TestResult {
  double statistic = 0.0;
  double p = 1.0;
  double dof = 0.0;
  std::string method;
  bool degenerate = false;
};

// Two-sample t-test with the Welch-Satterthwaite degrees of freedom.
TestResult welch_t_test(std::span<const double> a, std::span<const double> b);

// Pearson chi-square on an R x C contingency table, no continuity correction.
TestResult chi_square_test(const Eigen::MatrixXd& table);

// Two-sided Fisher exact test on a 2x2 table: the sum of hypergeometric
// probabilities no larger than the observed table's.
TestResult fisher_exact_2x2(long a, long b, long c, long d);

struct ComparisonRow {
  std::string feature;
  std::string level;  // categorical level, empty for continuous/binary
  std::string cluster1_summary;
  std::string cluster2_summary;
  double p = 1.0;
  std::string sig;
  std::string method;
};

struct ComparisonTable {
  long n1 = 0;
  long n2 = 0;
  std::vector<ComparisonRow> rows;
};

// Table-5-style cluster comparison: Welch t-tests for continuous features,
// chi-square for categorical/binary with Fisher's exact replacing it on 2x2
// tables whenever an expected cell drops below 5.
ComparisonTable compare_clusters(const Eigen::MatrixXd& X, const std::vector<ColumnInfo>& columns,
                                 const std::vector<int>& labels, int cluster_1 = 0,
                                 int cluster_2 = 1);

}  // namespace phenotyper
