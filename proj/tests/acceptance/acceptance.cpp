// Acceptance suite: one pass/fail line per criterion, exit 0 only if all
// pass. Each criterion pins its tolerances in code; oracles (dense grids,
// finite differences, brute-force searches) live here, independent of the
// library paths they check.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <vector>

#include "phenotyper/divergence.hpp"
#include "phenotyper/feature_rank.hpp"
#include "phenotyper/gmm.hpp"
#include "phenotyper/hypothesis.hpp"
#include "phenotyper/lgmm.hpp"
#include "phenotyper/metrics.hpp"
#include "phenotyper/parallel.hpp"
#include "phenotyper/pipeline.hpp"
#include "phenotyper/preprocess.hpp"
#include "phenotyper/rng.hpp"
#include "phenotyper/stats.hpp"
#include "phenotyper/synth.hpp"
#include "phenotyper/tsne.hpp"

#include "../test_support.hpp"

using namespace phenotyper;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Criterion {
  int number;
  std::string name;
  std::function<bool(std::string&)> run;
};

// ---------------------------------------------------------------- helpers

LgmmDesign simulate_design(int n_subjects, int n_visits, const Eigen::VectorXd& beta,
                           double sigma_mu, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n_subjects * n_visits, beta.size() - 1);
  std::vector<RowKey> keys;
  int at = 0;
  for (int s = 0; s < n_subjects; ++s) {
    const double mu = sigma_mu > 0.0 ? sigma_mu * rng.normal() : 0.0;
    for (int v = 1; v <= n_visits; ++v, ++at) {
      double eta = beta[0] + mu;
      for (Eigen::Index j = 0; j + 1 < beta.size(); ++j) {
        X(at, j) = rng.normal();
        eta += beta[j + 1] * X(at, j);
      }
      keys.push_back({"s" + std::to_string(s), v, rng.uniform() < logistic(eta) ? 1 : 0, false});
    }
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j + 1 < beta.size(); ++j) names.push_back("x" + std::to_string(j));
  return LgmmDesign::build_rows(X, keys, names);
}

// ------------------------------------------------------------- criteria

bool criterion_lgmm_oracle(std::string& detail) {
  const auto start = Clock::now();
  Eigen::VectorXd beta(2);
  beta << -0.4, 0.7;
  const double sigma = 1.0;
  const LgmmDesign design = simulate_design(3, 2, beta, sigma, 71);

  double oracle = 0.0;
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
    oracle += std::log(testsupport::simpson(integrand, -12.0, 12.0, 10000));
  }
  const double fast = lgmm_loglik(design, beta, sigma, 15);
  const double err = std::abs(fast - oracle);
  const double elapsed = seconds_since(start);
  std::ostringstream os;
  os << "abs err " << err << " (tol 1e-6), " << elapsed << " s (limit 1)";
  detail = os.str();
  return err < 1e-6 && elapsed < 1.0;
}

bool criterion_lgmm_coverage(std::string& detail) {
  const auto start = Clock::now();
  Eigen::VectorXd beta(3);
  beta << -1.0, 0.5, -0.3;
  const double sigma = 0.8;
  const int replicates = 200;

  std::vector<std::array<int, 3>> covered(replicates, {0, 0, 0});
  std::vector<char> failed(replicates, 0);
  parallel_for(replicates, [&](std::size_t r) {
    try {
      const LgmmDesign design =
          simulate_design(500, 3, beta, sigma, 1000 + static_cast<std::uint64_t>(r));
      LgmmConfig cfg;
      const LgmmFit fit = lgmm_fit(design, cfg);
      for (int j = 0; j < 3; ++j) {
        const double se = std::sqrt(fit.cov_beta(j, j));
        covered[r][j] =
            (beta[j] >= fit.beta[j] - 1.96 * se && beta[j] <= fit.beta[j] + 1.96 * se) ? 1 : 0;
      }
    } catch (const std::exception&) {
      failed[r] = 1;
    }
  });

  int fit_failures = 0;
  std::array<double, 3> coverage{0.0, 0.0, 0.0};
  for (int r = 0; r < replicates; ++r) {
    if (failed[r]) {
      ++fit_failures;
      continue;
    }
    for (int j = 0; j < 3; ++j) coverage[j] += covered[r][j];
  }
  const int done = replicates - fit_failures;
  bool ok = fit_failures == 0 && done > 0;
  std::ostringstream os;
  os << "coverage";
  for (int j = 0; j < 3; ++j) {
    coverage[j] /= std::max(1, done);
    ok = ok && coverage[j] >= 0.91 && coverage[j] <= 0.99;
    os << " b" << j << "=" << coverage[j];
  }
  const double elapsed = seconds_since(start);
  os << " (band [0.91, 0.99]), " << elapsed << " s (limit 600)";
  if (fit_failures) os << ", " << fit_failures << " fits failed";
  detail = os.str();
  return ok && elapsed < 600.0;
}

bool criterion_gradients(std::string& detail) {
  Eigen::VectorXd beta_gen(3);
  beta_gen << -0.8, 0.6, -0.4;
  const LgmmDesign design = simulate_design(8, 3, beta_gen, 0.9, 73);
  Rng rng(79);
  double worst_lgmm = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta[j] = rng.uniform(-1.0, 1.0);
    const double theta = rng.uniform(std::log(0.3), std::log(2.0));
    const LoglikGradient g = lgmm_loglik_grad(design, beta, theta, 15);
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
      const double fd = (lgmm_loglik(design, bp, std::exp(tp), 15) -
                         lgmm_loglik(design, bm, std::exp(tm), 15)) /
                        (2.0 * h);
      worst_lgmm = std::max(worst_lgmm, std::abs(g.grad[j] - fd) / std::max(1.0, std::abs(fd)));
    }
  }

  Eigen::MatrixXd X(12, 3);
  Rng rng2(83);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 3; ++j) X(i, j) = rng2.normal();
  TsneConfig tcfg;
  tcfg.perplexity = 5.0;
  const Eigen::MatrixXd P = tsne_joint_probabilities(X, tcfg);
  double worst_tsne = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd Y(12, 2);
    for (int i = 0; i < 12; ++i)
      for (int d = 0; d < 2; ++d) Y(i, d) = rng2.normal();
    const TsneCostGrad cg = tsne_cost_grad(P, Y);
    const double h = 1e-6;
    for (int i = 0; i < 12; ++i) {
      for (int d = 0; d < 2; ++d) {
        Eigen::MatrixXd Yp = Y, Ym = Y;
        Yp(i, d) += h;
        Ym(i, d) -= h;
        const double fd = (tsne_cost_grad(P, Yp).cost - tsne_cost_grad(P, Ym).cost) / (2.0 * h);
        worst_tsne = std::max(worst_tsne, std::abs(cg.grad(i, d) - fd) / std::max(1.0, std::abs(fd)));
      }
    }
  }
  std::ostringstream os;
  os << "max rel err: lgmm " << worst_lgmm << ", t-SNE " << worst_tsne << " (tol 1e-4)";
  detail = os.str();
  return worst_lgmm < 1e-4 && worst_tsne < 1e-4;
}

bool criterion_em(std::string& detail) {
  int recovered = 0, k_correct = 0;
  bool monotone = true;
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<int> truth;
    Rng rng(200 + s);
    Eigen::MatrixXd Y(200, 2);
    for (int i = 0; i < 200; ++i) {
      const int cls = i < 100 ? 0 : 1;
      truth.push_back(cls);
      Y(i, 0) = (cls == 0 ? -5.0 : 5.0) + rng.normal();
      Y(i, 1) = rng.normal();
    }
    GmmConfig cfg;
    cfg.seed = s;
    const GmmModel m = gmm_fit_em(Y, 2, cfg);
    for (std::size_t i = 1; i < m.loglik_trace.size(); ++i)
      if (m.loglik_trace[i] < m.loglik_trace[i - 1] - 1e-9) monotone = false;
    const bool means_ok = (m.means[0] - Eigen::Vector2d(-5, 0)).norm() < 0.3 &&
                          (m.means[1] - Eigen::Vector2d(5, 0)).norm() < 0.3;
    const ClusterAssignment asg = assign_clusters(m, Y);
    if (means_ok && testsupport::adjusted_rand_index(asg.labels, truth) >= 0.95) ++recovered;

    const SelectKResult sel = select_k(Y, 1, 6, cfg);
    for (const auto& model : sel.models)
      for (std::size_t i = 1; i < model.loglik_trace.size(); ++i)
        if (model.loglik_trace[i] < model.loglik_trace[i - 1] - 1e-9) monotone = false;
    if (sel.best_k == 2) ++k_correct;
  }
  const double bic_err = std::abs(gmm_bic(2, 100, -350.0) - 750.66);
  std::ostringstream os;
  os << "recovered " << recovered << "/10, select_k==2 " << k_correct
     << "/10 (need >= 9), monotone " << (monotone ? "yes" : "NO") << ", BIC err " << bic_err
     << " (tol 0.01)";
  detail = os.str();
  return recovered >= 9 && k_correct >= 9 && monotone && bic_err <= 0.01;
}

bool criterion_kld(std::string& detail) {
  Rng rng(301);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double mp = rng.uniform(-2.0, 2.0), mq = rng.uniform(-2.0, 2.0);
    const double sp = rng.uniform(0.4, 2.5), sq = rng.uniform(0.4, 2.5);
    auto integrand = [&](double x) {
      const double p = std::exp(-0.5 * (x - mp) * (x - mp) / (sp * sp)) /
                       (sp * std::sqrt(2.0 * std::numbers::pi));
      const double q = std::exp(-0.5 * (x - mq) * (x - mq) / (sq * sq)) /
                       (sq * std::sqrt(2.0 * std::numbers::pi));
      return p <= 0.0 ? 0.0 : p * std::log(p / q);
    };
    const double numeric =
        testsupport::simpson(integrand, mp - 16.0 * sp, mp + 16.0 * sp, 60000);
    worst = std::max(worst, std::abs(kld_gaussian_1d(mp, sp * sp, mq, sq * sq) - numeric));
  }
  const double self = kld_gaussian_1d(0.37, 1.21, 0.37, 1.21);
  bool nonneg = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const double v = kld_gaussian_1d(rng.uniform(-5.0, 5.0), rng.uniform(0.01, 9.0),
                                     rng.uniform(-5.0, 5.0), rng.uniform(0.01, 9.0));
    if (v < 0.0) nonneg = false;
  }
  std::ostringstream os;
  os << "max |closed-form - quadrature| " << worst << " (tol 1e-6), D(P||P) " << self
     << ", non-negative over 1000 pairs: " << (nonneg ? "yes" : "NO");
  detail = os.str();
  return worst < 1e-6 && self == 0.0 && nonneg;
}

bool criterion_tsne(std::string& detail) {
  Rng rng(401);
  bool calibrated = true;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd d(60);
    for (int i = 0; i < 60; ++i) d[i] = std::pow(rng.normal(), 2) * 4.0;
    const double target = 5.0 + 4.0 * trial;
    const Eigen::VectorXd p = perplexity_calibration(d, target);
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    if (std::abs(std::exp(h) - target) >= 1e-4) calibrated = false;
  }

  const int per_blob = 20;
  Eigen::MatrixXd X(2 * per_blob, 4);
  for (int i = 0; i < 2 * per_blob; ++i) {
    const double center = i < per_blob ? -4.0 : 4.0;
    for (int j = 0; j < 4; ++j) X(i, j) = (j == 0 ? center : 0.0) + 0.3 * rng.normal();
  }
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  cfg.total_iters = 500;
  cfg.exaggeration_iters = 100;
  cfg.seed = 5;
  const Embedding emb = tsne_embed(X, cfg);
  const Embedding emb2 = tsne_embed(X, cfg);
  const bool identical =
      std::memcmp(emb.coords.data(), emb2.coords.data(),
                  sizeof(double) * static_cast<std::size_t>(emb.coords.size())) == 0;

  Eigen::RowVector2d c1 = Eigen::RowVector2d::Zero(), c2 = Eigen::RowVector2d::Zero();
  for (int i = 0; i < per_blob; ++i) c1 += emb.coords.row(i);
  for (int i = per_blob; i < 2 * per_blob; ++i) c2 += emb.coords.row(i);
  c1 /= per_blob;
  c2 /= per_blob;
  double spread = 0.0;
  for (int i = 0; i < per_blob; ++i) spread += (emb.coords.row(i) - c1).norm();
  for (int i = per_blob; i < 2 * per_blob; ++i) spread += (emb.coords.row(i) - c2).norm();
  spread /= 2 * per_blob;
  const double separation = (c1 - c2).norm() / spread;

  const double handoff = emb.cost_trace[static_cast<std::size_t>(cfg.exaggeration_iters)];
  const bool descending = emb.cost_trace.back() < handoff;

  std::ostringstream os;
  os << "calibration<=1e-4 " << (calibrated ? "yes" : "NO") << ", separation " << separation
     << "x spread (need > 3), post-exaggeration descent " << (descending ? "yes" : "NO")
     << ", same-seed byte-identical " << (identical ? "yes" : "NO");
  detail = os.str();
  return calibrated && separation > 3.0 && descending && identical;
}

bool criterion_preprocess(std::string& detail) {
  Rng rng(501);

  // SMOTE on-segment, brute force over same-class pairs (n <= 50).
  Eigen::MatrixXd m(50, 3);
  std::vector<int> labels;
  std::vector<ColumnInfo> cols{{"a", FeatureKind::Continuous, 0},
                               {"b", FeatureKind::Continuous, 0},
                               {"c", FeatureKind::Continuous, 0}};
  for (int i = 0; i < 50; ++i) {
    const int cls = i % 2;
    for (int j = 0; j < 3; ++j) m(i, j) = rng.normal() + (j == 0 ? 3.0 * cls : 0.0);
    labels.push_back(cls);
  }
  const SmoteResult sm = smote_oversample(m, labels, 200, 5, 7, SmoteClasses::Both, cols);
  bool on_segment = true;
  for (Eigen::Index s = 50; s < sm.values.rows(); ++s) {
    bool found = false;
    for (Eigen::Index a = 0; a < 50 && !found; ++a) {
      if (labels[a] != sm.labels[static_cast<std::size_t>(s)]) continue;
      for (Eigen::Index b = 0; b < 50 && !found; ++b) {
        if (a == b || labels[b] != sm.labels[static_cast<std::size_t>(s)]) continue;
        const Eigen::RowVectorXd d = m.row(b) - m.row(a);
        const Eigen::RowVectorXd off = sm.values.row(s) - m.row(a);
        const double lambda = off.dot(d) / d.squaredNorm();
        if (lambda >= -1e-12 && lambda <= 1.0 + 1e-12 && (off - lambda * d).norm() < 1e-9)
          found = true;
      }
    }
    if (!found) on_segment = false;
  }

  // Table-1-sized minority doubling: 34 -> 68.
  Eigen::MatrixXd t1(360, 2);
  std::vector<int> t1_labels;
  for (int i = 0; i < 360; ++i) {
    t1(i, 0) = rng.normal() + (i < 34 ? 2.0 : 0.0);
    t1(i, 1) = rng.normal();
    t1_labels.push_back(i < 34 ? 1 : 0);
  }
  const SmoteResult doubled = smote_oversample(
      t1, t1_labels, 100, 5, 9, SmoteClasses::Minority,
      {{"a", FeatureKind::Continuous, 0}, {"b", FeatureKind::Continuous, 0}});
  long minority = 0;
  for (int y : doubled.labels) minority += y;

  // Mahalanobis affine invariance.
  Eigen::MatrixXd data(80, 3);
  for (int i = 0; i < 80; ++i)
    for (int j = 0; j < 3; ++j) data(i, j) = rng.normal();
  Eigen::Matrix3d A;
  A << 2.0, 0.4, -0.3, 0.0, 1.2, 0.5, -0.7, 0.1, 2.5;
  const Eigen::RowVector3d shift(3.0, -1.0, 7.0);
  const Eigen::MatrixXd mapped = (data * A.transpose()).rowwise() + shift;
  const OutlierReport base_rep = mahalanobis_outliers(data, 0.001);
  const OutlierReport mapped_rep = mahalanobis_outliers(mapped, 0.001);
  double worst_affine = 0.0;
  for (int i = 0; i < 80; ++i)
    worst_affine = std::max(worst_affine, std::abs(base_rep.d2[i] - mapped_rep.d2[i]) /
                                              std::max(1.0, std::abs(base_rep.d2[i])));

  // KNN imputation: observed cells bit-identical.
  EncodedMatrix em;
  em.columns = cols;
  em.values.resize(40, 3);
  em.missing = BoolGrid::Constant(40, 3, false);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) {
      em.values(i, j) = rng.normal();
      if (rng.uniform() < 0.12) em.missing(i, j) = true;
    }
  const ImputeResult imp = impute_knn(em, 5);
  bool observed_intact = true;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j)
      if (!em.missing(i, j) &&
          std::memcmp(&imp.values(i, j), &em.values(i, j), sizeof(double)) != 0)
        observed_intact = false;

  std::ostringstream os;
  os << "SMOTE on-segment " << (on_segment ? "yes" : "NO") << ", minority 34 -> " << minority
     << " (need 68), affine rel err " << worst_affine << " (tol 1e-8), observed cells intact "
     << (observed_intact ? "yes" : "NO");
  detail = os.str();
  return on_segment && minority == 68 && worst_affine < 1e-8 && observed_intact;
}

bool criterion_ranking(std::string& detail) {
  Rng rng(601);
  Dataset ds;
  const int p = 25, n_subjects = 60;
  for (int j = 0; j < p; ++j)
    ds.columns.push_back({"f" + std::to_string(j), FeatureKind::Continuous, 0});
  ds.X.resize(n_subjects * 3, p);
  int at = 0;
  for (int s = 0; s < n_subjects; ++s) {
    const int cls = s % 2;
    for (int v = 1; v <= 3; ++v, ++at) {
      ds.X(at, 0) = (cls == 1 ? 2.0 : -2.0) + 0.4 * rng.normal();
      for (int j = 1; j < p; ++j) ds.X(at, j) = rng.normal();
      ds.X(at, 7) = 1.0;  // constant column
      ds.keys.push_back({"s" + std::to_string(s), v, cls, false});
    }
  }
  RankConfig cfg;
  cfg.forest.n_trees = 100;
  cfg.seed = 3;
  const ImportanceTable t20 = rank_features(ds, cfg);
  cfg.n_top = 10;
  const ImportanceTable t10 = rank_features(ds, cfg);

  int signal_row = -1, const_row = -1;
  for (std::size_t i = 0; i < t20.feature.size(); ++i) {
    if (t20.feature[i] == "f0") signal_row = static_cast<int>(i);
    if (t20.feature[i] == "f7") const_row = static_cast<int>(i);
  }
  int fold_wins = 0;
  for (int f = 0; f < 5; ++f) {
    bool top_in_fold = true;
    for (Eigen::Index r = 0; r < t20.per_fold.rows(); ++r)
      if (r != signal_row && t20.per_fold(r, f) >= t20.per_fold(signal_row, f))
        top_in_fold = false;
    fold_wins += top_in_fold ? 1 : 0;
  }
  double sums_err = 0.0;
  for (int f = 0; f < 5; ++f)
    sums_err = std::max(sums_err, std::abs(t20.per_fold.col(f).sum() - 1.0));
  const double const_imp = t20.mean_importance[static_cast<std::size_t>(const_row)];

  std::ostringstream os;
  os << "signal first in " << fold_wins << "/5 folds (need >= 4), per-forest sum err "
     << sums_err << " (tol 1e-9), constant importance " << const_imp << ", top sizes "
     << t20.top.size() << "/" << t10.top.size() << " (need 20/10)";
  detail = os.str();
  return fold_wins >= 4 && sums_err < 1e-9 && const_imp == 0.0 && t20.top.size() == 20 &&
         t10.top.size() == 10;
}

bool criterion_metrics_cv(std::string& detail) {
  // Integer-exact formula checks on a hand-counted table.
  const ConfusionCounts counts{3, 5, 1, 1};
  const MetricsReport r = metrics_from_counts(counts);
  const bool formulas_ok =
      *r.acc * 10.0 == 8.0 && *r.pre * 4.0 == 3.0 && *r.spec * 6.0 == 5.0 &&
      *r.npv * 6.0 == 5.0 && *r.recall * 4.0 == 3.0;

  Rng rng(701);
  Dataset ds;
  ds.columns = {{"x1", FeatureKind::Continuous, 0}, {"x2", FeatureKind::Continuous, 0}};
  const int n_subjects = 50;
  ds.X.resize(n_subjects * 3, 2);
  int at = 0;
  for (int s = 0; s < n_subjects; ++s) {
    const double mu = 0.7 * rng.normal();
    for (int v = 1; v <= 3; ++v, ++at) {
      ds.X(at, 0) = rng.normal();
      ds.X(at, 1) = rng.normal();
      const double eta = -0.8 + mu + 1.2 * ds.X(at, 0) - 0.5 * ds.X(at, 1);
      ds.keys.push_back(
          {"s" + std::to_string(s), v, rng.uniform() < logistic(eta) ? 1 : 0, false});
    }
  }
  CvConfig cfg;
  cfg.seed = 5;
  cfg.smote_percent = 100;
  cfg.lgmm.quad_points = 7;
  const CvOutcome cv = cross_validate(ds, {"x1", "x2"}, CvModel::Lgmm, cfg);

  std::set<std::string> eval_subjects;
  bool no_synthetic = true;
  for (const auto& prediction : cv.oof) {
    if (prediction.subject_id.rfind("smote:", 0) == 0) no_synthetic = false;
    eval_subjects.insert(prediction.subject_id);
  }
  const bool partition = eval_subjects.size() == static_cast<std::size_t>(n_subjects) &&
                         cv.oof.size() == ds.keys.size();

  const auto by_visit = metrics_by_visit(cv.oof, 3);
  ConfusionCounts sum;
  for (const auto& m : by_visit) {
    sum.tp += m.counts.tp;
    sum.tn += m.counts.tn;
    sum.fp += m.counts.fp;
    sum.fn += m.counts.fn;
  }
  const bool strata_sum = sum.tp == cv.pooled.counts.tp && sum.tn == cv.pooled.counts.tn &&
                          sum.fp == cv.pooled.counts.fp && sum.fn == cv.pooled.counts.fn;

  std::ostringstream os;
  os << "formulas integer-exact " << (formulas_ok ? "yes" : "NO") << ", folds partition subjects "
     << (partition ? "yes" : "NO") << ", no SMOTE row evaluated "
     << (no_synthetic ? "yes" : "NO") << ", stratum counts pool " << (strata_sum ? "yes" : "NO");
  detail = os.str();
  return formulas_ok && partition && no_synthetic && strata_sum;
}

bool criterion_hypothesis(std::string& detail) {
  const TestResult fisher = fisher_exact_2x2(2, 0, 0, 2);
  const double fisher_err = std::abs(fisher.p - 1.0 / 3.0);

  Rng rng(801);
  std::vector<double> pvals;
  for (int sim = 0; sim < 2000; ++sim) {
    std::vector<double> a(25), b(25);
    for (int i = 0; i < 25; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    pvals.push_back(welch_t_test(a, b).p);
  }
  const double ks = testsupport::ks_uniform(pvals);
  std::ostringstream os;
  os << "Fisher [[2,0],[0,2]] err " << fisher_err << " (tol 1e-12), Welch KS " << ks
     << " (limit 0.05)";
  detail = os.str();
  return fisher_err < 1e-12 && ks < 0.05;
}

bool criterion_end_to_end(std::string& detail) {
  const auto start = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "phenotyper_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);

  SynthConfig synth;
  synth.n_subjects = 360;
  synth.n_visits = 3;
  synth.sigma_mu = 2.2;
  synth.missing_rate = 0.03;
  synth.seed = 20260810;
  synth.group_targets = std::vector<int>{303, 13, 1, 9, 4, 1, 0, 29};
  auto cont = [](const std::string& name, double mean, double sd) {
    FeatureGen g;
    g.spec = {name, FeatureKind::Continuous, "", {}};
    g.mean = mean;
    g.sd = sd;
    return g;
  };
  synth.features.push_back(cont("total_cholesterol", 200.0, 32.0));
  synth.features.push_back(cont("ldl", 115.0, 30.0));
  synth.features.push_back(cont("bmi", 31.4, 6.8));
  synth.features.push_back(cont("age", 58.0, 7.4));
  synth.features.push_back(cont("ahi", 11.0, 14.0));
  synth.features.push_back(cont("sleep_latency", 13.0, 16.0));
  FeatureGen sex;
  sex.spec = {"sex", FeatureKind::Categorical, "", {"F", "M"}};
  sex.level_probs = {0.53, 0.47};
  synth.features.push_back(sex);
  FeatureGen med;
  med.spec = {"htn_med", FeatureKind::Binary, "", {}};
  med.prob = 0.38;
  synth.features.push_back(med);
  // Intercept, then slopes aligned with the feature list.
  synth.true_beta = {-4.0, -0.004, -0.006, 0.02, 0.02, 0.015, 0.005, 0.35, 0.7};

  const SynthResult cohort = generate_cohort(synth);
  save_cohort(cohort.cohort, dir / "cohort.csv", dir / "schema.json");

  PipelineConfig cfg;
  cfg.cohort_csv = dir / "cohort.csv";
  cfg.schema_json = dir / "schema.json";
  cfg.seed = 42;
  cfg.rank.n_top = 8;
  cfg.cluster.k = 2;
  cfg.evaluate.subgroups = {1, 3};
  cfg.out_dir = dir / "out1";
  const Manifest m1 = run_pipeline(cfg);
  cfg.out_dir = dir / "out2";
  const Manifest m2 = run_pipeline(cfg);

  const bool seven_stages = m1.stages.size() == 7;
  const std::vector<std::string> required{
      "wald_lgmm.csv",  "wald_lr_visit1.csv", "importance.csv", "embedding.csv",
      "assignments.csv", "kld_report.csv",     "trajectory.json", "comparison.csv"};
  bool artifacts = true;
  for (const auto& f : required)
    if (!fs::exists(dir / "out1" / f)) artifacts = false;

  // Two clusters in the assignment output.
  bool two_clusters = false;
  {
    std::ifstream in(dir / "out1" / "gmm_model.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    two_clusters = text.find("\"K\": 2") != std::string::npos;
  }

  bool identical = m1.stages.size() == m2.stages.size();
  if (identical) {
    for (std::size_t s = 0; s < m1.stages.size(); ++s) {
      if (m1.stages[s].outputs.size() != m2.stages[s].outputs.size()) {
        identical = false;
        break;
      }
      for (std::size_t a = 0; a < m1.stages[s].outputs.size(); ++a)
        if (m1.stages[s].outputs[a].fnv64 != m2.stages[s].outputs[a].fnv64 ||
            m1.stages[s].outputs[a].path != m2.stages[s].outputs[a].path)
          identical = false;
    }
  }

  const double elapsed = seconds_since(start);
  std::ostringstream os;
  os << "stages " << m1.stages.size() << "/7, artifacts " << (artifacts ? "ok" : "MISSING")
     << ", K=2 assignment " << (two_clusters ? "yes" : "NO") << ", manifests identical "
     << (identical ? "yes" : "NO") << ", " << elapsed << " s (limit 300, both runs)";
  detail = os.str();
  return seven_stages && artifacts && two_clusters && identical && elapsed < 300.0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria{
      {1, "LGMM marginal likelihood matches the dense-grid oracle", criterion_lgmm_oracle},
      {2, "LGMM Wald confidence intervals reach nominal coverage", criterion_lgmm_coverage},
      {3, "analytic gradients match central finite differences", criterion_gradients},
      {4, "EM monotonicity, planted-mixture recovery, BIC selection", criterion_em},
      {5, "closed-form Gaussian KLD matches numerical integration", criterion_kld},
      {6, "t-SNE calibration, separation, descent, determinism", criterion_tsne},
      {7, "preprocessing properties (SMOTE, Mahalanobis, imputation)", criterion_preprocess},
      {8, "feature ranking finds planted signal, importances normalized", criterion_ranking},
      {9, "confusion metrics exact, CV partitions subjects cleanly", criterion_metrics_cv},
      {10, "Fisher exact and Welch null-uniformity", criterion_hypothesis},
      {11, "end-to-end pipeline on the Table-1-structured cohort", criterion_end_to_end},
  };

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failures = 0;
  for (auto& c : criteria) {
    if (only != 0 && c.number != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.number << ": " << c.name
              << " — " << detail << "\n";
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
