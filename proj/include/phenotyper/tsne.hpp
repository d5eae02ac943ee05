#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace phenotyper {

struct TsneConfig {
  double perplexity = 30.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  int total_iters = 1000;
  double learning_rate = 200.0;
  double momentum_start = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  enum class Init { RandomGaussian, Pca } init = Init::RandomGaussian;
  std::uint64_t seed = 0;
  bool standardize_input = true;
};

struct Embedding {
  Eigen::MatrixXd coords;          // n x 2
  std::vector<double> cost_trace;  // KL against the unexaggerated P, per iteration
  TsneConfig config;
  int degenerate_rows = 0;  // calibration fell back to a uniform row
};

struct CalibrationInfo {
  double beta = 0.0;  // kernel precision 1/(2 sigma^2)
  double achieved_perplexity = 0.0;
  bool degenerate = false;
  int iterations = 0;
};

// Conditional neighbour distribution for one point: binary search on the
// Gaussian bandwidth until 2^H(P) hits the target perplexity within 1e-5
// (50 bisection steps cap). Input distances exclude the self entry.
Eigen::VectorXd perplexity_calibration(const Eigen::VectorXd& sq_dists, double perplexity,
                                       CalibrationInfo* info = nullptr);

// KL(P || Q) with Student-t(1) low-dimensional affinities, and its gradient
// 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2).
struct TsneCostGrad {
  double cost;
  Eigen::MatrixXd grad;  // n x 2
};
TsneCostGrad tsne_cost_grad(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y);

Eigen::MatrixXd tsne_joint_probabilities(const Eigen::MatrixXd& X, const TsneConfig& config,
                                         int* degenerate_rows = nullptr);

Embedding tsne_embed(const Eigen::MatrixXd& X, const TsneConfig& config);

}  // namespace phenotyper
