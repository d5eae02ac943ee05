#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phenotyper/dataset.hpp"

namespace phenotyper {

// Grouped design for the random-intercept logistic model. X blocks carry an
// intercept column first; term_names align with the columns.
struct SubjectBlock {
  std::string subject_id;
  Eigen::MatrixXd X;  // m_i x (1 + p)
  Eigen::VectorXd y;
  std::vector<int> visits;
};

struct LgmmDesign {
  std::vector<SubjectBlock> subjects;
  std::vector<std::string> term_names;  // "(Intercept)", then covariates

  static LgmmDesign build(const Dataset& data, const std::vector<std::string>& features);
  static LgmmDesign build_rows(const Eigen::MatrixXd& X_no_intercept,
                               const std::vector<RowKey>& keys,
                               const std::vector<std::string>& names);
  Eigen::Index n_rows() const;
};

struct LgmmConfig {
  int quad_points = 15;
  double tol = 1e-8;
  int max_iter = 200;
  bool standardize = true;
};

struct LgmmFit {
  Eigen::VectorXd beta;  // original scale, intercept first
  double sigma_mu = 0.0;
  Eigen::VectorXd mu_modes;  // per subject, design order
  std::vector<std::string> subject_ids;
  Eigen::MatrixXd cov_beta;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  bool separation_warning = false;
  std::vector<std::string> term_names;
  int quad_points = 15;
};

// Marginal log-likelihood: per subject the random intercept is integrated
// out with adaptive Gauss-Hermite quadrature centered at the posterior mode
// (Laplace when quad_points = 1). sigma_mu = 0 degenerates to the plain
// logistic log-likelihood.
double lgmm_loglik(const LgmmDesign& design, const Eigen::VectorXd& beta, double sigma_mu,
                   int quad_points);

// Value and gradient with respect to (beta, log sigma_mu), via posterior
// expectations under the same quadrature.
struct LoglikGradient {
  double value;
  Eigen::VectorXd grad;  // d/d beta, then d/d log sigma
};
LoglikGradient lgmm_loglik_grad(const LgmmDesign& design, const Eigen::VectorXd& beta,
                                double log_sigma, int quad_points);

LgmmFit lgmm_fit(const LgmmDesign& design, const LgmmConfig& config = {});

enum class PredictMode { Population, Subject };

struct PredictResult {
  Eigen::VectorXd prob;
  std::vector<bool> unknown_subject;  // subject mode: fell back to population
};
PredictResult lgmm_predict(const LgmmFit& fit, const LgmmDesign& rows, PredictMode mode);

struct WaldRow {
  std::string name;
  double estimate;
  double se;
  double ci_lower;
  double ci_upper;
  double p;
  std::string sig;
};

std::vector<WaldRow> wald_table(const LgmmFit& fit);

// Table-3 significance bands: < 0.001 '***', < 0.01 '**', < 0.05 '*', < 0.1 '+'.
std::string sig_code(double p);

// Plain per-visit logistic regression: the same model with sigma_mu pinned
// at zero, fitted by Newton-Raphson.
LgmmFit lr_fit(const LgmmDesign& design, const LgmmConfig& config = {});

}  // namespace phenotyper
