#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace phenotyper {

struct GmmConfig {
  double tol = 1e-8;
  int max_iter = 500;
  int restarts = 10;
  std::uint64_t seed = 0;
  double cov_eigen_floor = 1e-6;
};

struct GmmModel {
  int K = 0;
  Eigen::VectorXd weights;
  std::vector<Eigen::Vector2d> means;
  std::vector<Eigen::Matrix2d> covariances;
  std::vector<double> loglik_trace;  // best restart, per EM iteration
  double loglik = 0.0;
  double bic = 0.0;
  long n = 0;
  bool converged = false;
  int rescued_components = 0;
  GmmConfig config;
};

struct ClusterAssignment {
  Eigen::MatrixXd responsibilities;  // n x K, rows sum to 1
  std::vector<int> labels;           // argmax, ties to the lowest k
};

// Full-covariance EM on 2-D points, best of k-means++-seeded restarts.
// Components are sorted by mean x (then y) so cluster identities are stable
// across runs.
GmmModel gmm_fit_em(const Eigen::MatrixXd& Y, int K, const GmmConfig& config);

// params * ln n - 2 loglik with params = (K-1) + 2K + 3K for full 2-D
// covariances.
double gmm_bic(int K, long n, double loglik);

struct SelectKResult {
  int best_k = 0;
  std::vector<GmmModel> models;  // one per candidate K, ascending
};
SelectKResult select_k(const Eigen::MatrixXd& Y, int k_min, int k_max, const GmmConfig& config);

ClusterAssignment assign_clusters(const GmmModel& model, const Eigen::MatrixXd& Y);

}  // namespace phenotyper
