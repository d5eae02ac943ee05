#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "phenotyper/preprocess.hpp"

namespace phenotyper {

// Closed-form KL divergence between 1-D Gaussians:
// log(sq/sp) + (sp^2 + (mp-mq)^2) / (2 sq^2) - 1/2.
double kld_gaussian_1d(double mean_p, double var_p, double mean_q, double var_q);

struct KldRow {
  std::string feature;
  double kld = 0.0;
  std::string method;  // "gaussian" or "discrete"
};

struct KldReport {
  std::vector<KldRow> rows;  // sorted descending by divergence
};

// Per-feature divergence of cluster 1's distribution from cluster 2's.
// Continuous features get maximum-likelihood Gaussian fits per cluster;
// categorical/binary features get Laplace-smoothed empirical PMFs (add 1/L)
// and the discrete sum p log(p/q).
KldReport per_feature_kld(const Eigen::MatrixXd& X, const std::vector<ColumnInfo>& columns,
                          const std::vector<int>& labels, int cluster_1 = 0, int cluster_2 = 1);

}  // namespace phenotyper
