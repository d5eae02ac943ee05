#include <doctest.h>

#include <cmath>
#include <numbers>

#include "phenotyper/errors.hpp"
#include "phenotyper/lgmm.hpp"
#include "phenotyper/rng.hpp"
#include "phenotyper/stats.hpp"
#include "test_support.hpp"

using namespace phenotyper;

namespace {

LgmmDesign tiny_design(int n_subjects, int n_visits, std::uint64_t seed,
                       const Eigen::VectorXd& beta, double sigma_mu) {
  Rng rng(seed);
  Eigen::MatrixXd X(n_subjects * n_visits, beta.size() - 1);
  std::vector<RowKey> keys;
  int at = 0;
  for (int s = 0; s < n_subjects; ++s) {
    const double mu = sigma_mu * rng.normal();
    for (int v = 1; v <= n_visits; ++v, ++at) {
      double eta = beta[0] + mu;
      for (Eigen::Index j = 0; j + 1 < beta.size(); ++j) {
        X(at, j) = rng.normal();
        eta += beta[j + 1] * X(at, j);
      }
      const int y = rng.uniform() < logistic(eta) ? 1 : 0;
      keys.push_back({"s" + std::to_string(s), v, y, false});
    }
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j + 1 < beta.size(); ++j) names.push_back("x" + std::to_string(j));
  return LgmmDesign::build_rows(X, keys, names);
}

// Dense-grid oracle: per subject, Simpson integration of the joint density
// over the random intercept.
double grid_loglik(const LgmmDesign& design, const Eigen::VectorXd& beta, double sigma,
                   int points = 10001) {
  double total = 0.0;
  for (const auto& b : design.subjects) {
    const Eigen::VectorXd eta0 = b.X * beta;
    auto integrand = [&](double u) {
      double v = std::exp(-0.5 * u * u / (sigma * sigma)) /
                 (sigma * std::sqrt(2.0 * std::numbers::pi));
      for (Eigen::Index j = 0; j < b.y.size(); ++j) {
        const double p = logistic(eta0[j] + u);
        v *= b.y[j] > 0.5 ? p : 1.0 - p;
      }
      return v;
    };
    total += std::log(testsupport::simpson(integrand, -12.0 * sigma, 12.0 * sigma, points - 1));
  }
  return total;
}

}  // namespace

TEST_CASE("sigma_mu = 0 reduces to the plain logistic log-likelihood") {
  Eigen::VectorXd beta(3);
  beta << -0.5, 0.8, -0.3;
  const LgmmDesign design = tiny_design(12, 3, 1, beta, 0.5);
  const double mixed = lgmm_loglik(design, beta, 0.0, 15);
  double plain = 0.0;
  for (const auto& b : design.subjects) {
    const Eigen::VectorXd eta = b.X * beta;
    for (Eigen::Index j = 0; j < b.y.size(); ++j)
      plain += b.y[j] * eta[j] - std::log1p(std::exp(eta[j]));
  }
  CHECK(mixed == doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("single subject, single visit, null model gives log one half") {
  Eigen::MatrixXd X(1, 0);
  const std::vector<RowKey> keys{{"only", 1, 0, false}};
  const LgmmDesign design = LgmmDesign::build_rows(X, keys, {});
  Eigen::VectorXd beta(1);
  beta << 0.0;
  // sigma at the degenerate limit.
  CHECK(lgmm_loglik(design, beta, 0.0, 15) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  // A tiny but positive sigma agrees to quadrature accuracy.
  CHECK(lgmm_loglik(design, beta, 1e-6, 15) == doctest::Approx(std::log(0.5)).epsilon(1e-9));
}

TEST_CASE("adaptive quadrature matches a dense Simpson grid to 1e-6") {
  Eigen::VectorXd beta(2);
  beta << -0.4, 0.7;
  const LgmmDesign design = tiny_design(3, 2, 5, beta, 1.0);
  const double oracle = grid_loglik(design, beta, 1.0);
  const double fast = lgmm_loglik(design, beta, 1.0, 15);
  CHECK(std::abs(fast - oracle) < 1e-6);
}

TEST_CASE("loglik converges monotonically in quadrature points") {
  Eigen::VectorXd beta(2);
  beta << -0.6, 0.5;
  const LgmmDesign design = tiny_design(10, 3, 9, beta, 1.3);
  const double l1 = lgmm_loglik(design, beta, 1.3, 1);
  const double l7 = lgmm_loglik(design, beta, 1.3, 7);
  const double l15 = lgmm_loglik(design, beta, 1.3, 15);
  CHECK(std::abs(l7 - l15) < std::abs(l1 - l7) + 1e-12);
  CHECK(std::abs(l7 - l15) < 1e-6);
}

TEST_CASE("analytic gradient matches central finite differences") {
  Eigen::VectorXd beta_true(3);
  beta_true << -0.8, 0.6, -0.4;
  const LgmmDesign design = tiny_design(8, 3, 13, beta_true, 0.9);
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta[j] = rng.uniform(-1.0, 1.0);
    const double theta = rng.uniform(std::log(0.3), std::log(2.0));
    const LoglikGradient g = lgmm_loglik_grad(design, beta, theta, 15);

    Eigen::VectorXd fd(4);
    const double h = 1e-5;
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd bp = beta, bm = beta;
      double tp = theta, tm = theta;
      if (j < 3) {
        bp[j] += h;
        bm[j] -= h;
      } else {
        tp += h;
        tm -= h;
      }
      fd[j] = (lgmm_loglik(design, bp, std::exp(tp), 15) -
               lgmm_loglik(design, bm, std::exp(tm), 15)) /
              (2.0 * h);
    }
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(g.grad[j] - fd[j]) < 1e-4 * std::max(1.0, std::abs(fd[j])));
  }
}

TEST_CASE("fit recovers a null intercept on balanced data with zero covariates") {
  Rng rng(23);
  Eigen::MatrixXd X(80, 0);
  std::vector<RowKey> keys;
  for (int i = 0; i < 80; ++i) keys.push_back({"s" + std::to_string(i / 2), i % 2 + 1, i % 2, false});
  const LgmmDesign design = LgmmDesign::build_rows(X, keys, {});
  const LgmmFit fit = lgmm_fit(design, {});
  const double se = std::sqrt(fit.cov_beta(0, 0));
  CHECK(std::abs(fit.beta[0]) < 2.0 * se + 1e-6);
}

TEST_CASE("fit recovers planted parameters on a moderate cohort") {
  Eigen::VectorXd beta(3);
  beta << -1.0, 0.5, -0.3;
  const LgmmDesign design = tiny_design(400, 3, 29, beta, 0.8);
  const LgmmFit fit = lgmm_fit(design, {});
  CHECK(fit.converged);
  for (int j = 0; j < 3; ++j) {
    const double se = std::sqrt(fit.cov_beta(j, j));
    CHECK(std::abs(fit.beta[j] - beta[j]) < 4.0 * se);
  }
  CHECK(fit.sigma_mu > 0.3);
  CHECK(fit.sigma_mu < 1.6);
  CHECK(fit.mu_modes.size() == 400);
}

TEST_CASE("planted zero sigma drives the estimate to the floor") {
  Eigen::VectorXd beta(2);
  beta << -0.5, 0.6;
  const LgmmDesign design = tiny_design(300, 3, 31, beta, 0.0);
  const LgmmFit fit = lgmm_fit(design, {});
  CHECK(fit.sigma_mu <= 0.05);
}

TEST_CASE("model nesting: free sigma fits at least as well as sigma = 0") {
  Eigen::VectorXd beta(2);
  beta << -0.7, 0.4;
  const LgmmDesign design = tiny_design(60, 3, 37, beta, 1.0);
  const LgmmFit mixed = lgmm_fit(design, {});
  const LgmmFit plain = lr_fit(design, {});
  CHECK(mixed.loglik >= plain.loglik - 1e-6);
}

TEST_CASE("marginal loglik increases along accepted optimizer steps") {
  // Indirect check: the fitted maximum dominates both the start (plain
  // logistic solution with sigma = 0.5) and small perturbations.
  Eigen::VectorXd beta(2);
  beta << -0.9, 0.8;
  const LgmmDesign design = tiny_design(50, 3, 41, beta, 0.7);
  const LgmmFit fit = lgmm_fit(design, {});
  const double at_opt = lgmm_loglik(design, fit.beta, fit.sigma_mu, 15);
  Rng rng(43);
  for (int t = 0; t < 6; ++t) {
    Eigen::VectorXd b = fit.beta;
    for (Eigen::Index j = 0; j < b.size(); ++j) b[j] += 0.05 * rng.normal();
    CHECK(at_opt >= lgmm_loglik(design, b, fit.sigma_mu, 15) - 1e-9);
  }
}

TEST_CASE("prediction equivariance under covariate shifts") {
  Eigen::VectorXd beta(2);
  beta << -0.5, 0.7;
  const LgmmDesign design = tiny_design(60, 3, 47, beta, 0.6);
  const LgmmFit fit = lgmm_fit(design, {});

  // Shift the covariate by a constant and refit: the optimum is the same
  // model, so the maximized loglik must match.
  LgmmDesign shifted = design;
  for (auto& b : shifted.subjects) b.X.col(1).array() += 3.0;
  const LgmmFit fit2 = lgmm_fit(shifted, {});
  CHECK(fit2.loglik == doctest::Approx(fit.loglik).epsilon(1e-6));
  CHECK(fit2.beta[1] == doctest::Approx(fit.beta[1]).epsilon(1e-3));
  CHECK(fit2.beta[0] == doctest::Approx(fit.beta[0] - 3.0 * fit.beta[1]).epsilon(2e-3));
}

TEST_CASE("population and subject predictions differ by the posterior mode shift") {
  Eigen::VectorXd beta(2);
  beta << -0.8, 0.5;
  const LgmmDesign design = tiny_design(30, 3, 53, beta, 1.1);
  const LgmmFit fit = lgmm_fit(design, {});
  const PredictResult pop = lgmm_predict(fit, design, PredictMode::Population);
  const PredictResult sub = lgmm_predict(fit, design, PredictMode::Subject);
  Eigen::Index at = 0;
  for (std::size_t s = 0; s < design.subjects.size(); ++s) {
    const double mode = fit.mu_modes[static_cast<Eigen::Index>(s)];
    for (Eigen::Index j = 0; j < design.subjects[s].y.size(); ++j, ++at) {
      const double logit_pop = std::log(pop.prob[at] / (1.0 - pop.prob[at]));
      const double logit_sub = std::log(sub.prob[at] / (1.0 - sub.prob[at]));
      CHECK(logit_sub - logit_pop == doctest::Approx(mode).epsilon(1e-8));
    }
  }
}

TEST_CASE("prediction basics: zero logit is one half, known shift evaluates exactly") {
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 1.0;
  const std::vector<RowKey> keys{{"a", 1, 0, false}, {"a", 2, 1, false}};
  const LgmmDesign rows = LgmmDesign::build_rows(X, keys, {"x"});

  LgmmFit fit;
  fit.term_names = {"(Intercept)", "x"};
  fit.beta.resize(2);
  fit.beta << 0.0, 0.0;
  fit.sigma_mu = 0.0;
  fit.mu_modes = Eigen::VectorXd::Zero(1);
  fit.subject_ids = {"a"};
  fit.cov_beta = Eigen::MatrixXd::Identity(2, 2);
  CHECK(lgmm_predict(fit, rows, PredictMode::Population).prob[0] == doctest::Approx(0.5));

  fit.beta << 1.0, 1.0;  // row 2 logit: 1 + 1 = 2
  const PredictResult pred = lgmm_predict(fit, rows, PredictMode::Population);
  CHECK(pred.prob[1] == doctest::Approx(0.8808).epsilon(1e-4));
}

TEST_CASE("unknown subjects fall back to the population curve, flagged") {
  Eigen::MatrixXd X(1, 1);
  X << 0.5;
  const std::vector<RowKey> keys{{"stranger", 1, 0, false}};
  const LgmmDesign rows = LgmmDesign::build_rows(X, keys, {"x"});
  LgmmFit fit;
  fit.term_names = {"(Intercept)", "x"};
  fit.beta.resize(2);
  fit.beta << 0.3, -0.2;
  fit.sigma_mu = 0.5;
  fit.mu_modes = Eigen::VectorXd::Constant(1, 0.9);
  fit.subject_ids = {"someone_else"};
  fit.cov_beta = Eigen::MatrixXd::Identity(2, 2);
  const PredictResult pred = lgmm_predict(fit, rows, PredictMode::Subject);
  CHECK(pred.unknown_subject[0]);
  CHECK(pred.prob[0] == doctest::Approx(logistic(0.3 - 0.2 * 0.5)));
}

TEST_CASE("wald rows follow the Table-3 layout rules") {
  LgmmFit fit;
  fit.term_names = {"(Intercept)", "total_cholesterol", "null_effect", "edge"};
  fit.beta.resize(4);
  fit.beta << 0.2, -0.0081, 0.0, 0.00529;
  fit.cov_beta = Eigen::MatrixXd::Zero(4, 4);
  fit.cov_beta(0, 0) = 0.01;
  fit.cov_beta(1, 1) = 0.0027 * 0.0027;
  fit.cov_beta(2, 2) = 0.04;
  fit.cov_beta(3, 3) = 0.0027 * 0.0027;  // estimate = 1.96 * se

  const auto rows = wald_table(fit);
  CHECK(rows[1].se == doctest::Approx(0.0027));
  CHECK(rows[1].p == doctest::Approx(0.0027).epsilon(0.01));  // z = -3
  CHECK(rows[1].ci_lower == doctest::Approx(-0.0081 - 1.96 * 0.0027));
  CHECK(rows[1].ci_upper == doctest::Approx(-0.0081 + 1.96 * 0.0027));
  CHECK(rows[1].sig == "**");

  CHECK(rows[2].p == doctest::Approx(1.0));
  CHECK(rows[2].sig == "");

  CHECK(rows[3].p == doctest::Approx(0.05).epsilon(1e-3));
  for (const auto& r : rows) {
    CHECK(r.ci_lower <= r.estimate);
    CHECK(r.estimate <= r.ci_upper);
  }
}

TEST_CASE("significance codes band strictly") {
  CHECK(sig_code(0.0005) == "***");
  CHECK(sig_code(0.0031) == "**");
  CHECK(sig_code(0.0224) == "*");
  CHECK(sig_code(0.0768) == "+");
  CHECK(sig_code(0.245) == "");
  CHECK(sig_code(1.0) == "");
}

TEST_CASE("per-visit logistic fit equals the degenerate mixed model") {
  Eigen::VectorXd beta(2);
  beta << -0.3, 0.9;
  const LgmmDesign design = tiny_design(40, 1, 59, beta, 0.0);
  const LgmmFit fit = lr_fit(design, {});
  CHECK(fit.sigma_mu == 0.0);
  CHECK(lgmm_loglik(design, fit.beta, 0.0, 15) == doctest::Approx(fit.loglik).epsilon(1e-8));
}

TEST_CASE("separable data raises the separation warning") {
  Eigen::MatrixXd X(4, 1);
  X << -2.0, -1.0, 1.0, 2.0;
  const std::vector<RowKey> keys{
      {"a", 1, 0, false}, {"b", 1, 0, false}, {"c", 1, 1, false}, {"d", 1, 1, false}};
  const LgmmDesign design = LgmmDesign::build_rows(X, keys, {"x"});
  const LgmmFit fit = lr_fit(design, {});
  CHECK(fit.separation_warning);
}

TEST_CASE("constant outcomes are rejected") {
  Eigen::MatrixXd X(4, 1);
  X.setRandom();
  const std::vector<RowKey> keys{
      {"a", 1, 1, false}, {"b", 1, 1, false}, {"c", 1, 1, false}, {"d", 1, 1, false}};
  const LgmmDesign design = LgmmDesign::build_rows(X, keys, {"x"});
  CHECK_THROWS_AS(lgmm_fit(design, {}), SingleClass);
  CHECK_THROWS_AS(lr_fit(design, {}), SingleClass);
}
