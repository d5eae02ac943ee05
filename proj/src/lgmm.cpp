#include "phenotyper/lgmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "phenotyper/errors.hpp"
#include "phenotyper/stats.hpp"

namespace phenotyper {

namespace {

constexpr double kLogSigmaMin = -9.2103403719761836;  // log(1e-4)
constexpr double kLogSigmaMax = 3.912023005428146;    // log(50)
constexpr double kSeparationThreshold = 15.0;         // on the standardized scale

double block_loglik_at(const SubjectBlock& b, const Eigen::VectorXd& eta0, double u) {
  double ll = 0.0;
  for (Eigen::Index j = 0; j < b.y.size(); ++j) {
    const double eta = eta0[j] + u;
    ll += b.y[j] * eta - log1pexp(eta);
  }
  return ll;
}

// Posterior mode of the random intercept for one subject: maximizes
// l(u) - u^2/(2 sigma^2) by damped Newton. Returns (mode, curvature) where
// curvature = -f''(mode) > 0.
std::pair<double, double> find_mode(const SubjectBlock& b, const Eigen::VectorXd& eta0,
                                    double sigma, double start) {
  const double inv_var = 1.0 / (sigma * sigma);
  double u = start;
  double f = block_loglik_at(b, eta0, u) - 0.5 * u * u * inv_var;
  for (int it = 0; it < 100; ++it) {
    double g = -u * inv_var;
    double h = -inv_var;
    for (Eigen::Index j = 0; j < b.y.size(); ++j) {
      const double p = logistic(eta0[j] + u);
      g += b.y[j] - p;
      h -= p * (1.0 - p);
    }
    if (std::abs(g) < 1e-11) break;
    double step = -g / h;
    step = std::clamp(step, -10.0, 10.0);
    double u_new = u + step;
    double f_new = block_loglik_at(b, eta0, u_new) - 0.5 * u_new * u_new * inv_var;
    int halvings = 0;
    while (f_new < f && halvings++ < 40) {
      step *= 0.5;
      u_new = u + step;
      f_new = block_loglik_at(b, eta0, u_new) - 0.5 * u_new * u_new * inv_var;
    }
    u = u_new;
    f = f_new;
  }
  double curv = inv_var;
  for (Eigen::Index j = 0; j < b.y.size(); ++j) {
    const double p = logistic(eta0[j] + u);
    curv += p * (1.0 - p);
  }
  return {u, curv};
}

struct SubjectQuad {
  double log_integral;
  double mode;
  // Posterior expectations under the quadrature weights.
  Eigen::VectorXd score_beta;  // sum_j (y - p(u)) x_j averaged over nodes
  double score_theta;          // E[u^2/sigma^2 - 1]
};

// Adaptive Gauss-Hermite approximation of log integral exp(l(u)) phi(u) du,
// recentered at the subject mode and scaled by the local curvature.
SubjectQuad subject_quadrature(const SubjectBlock& b, const Eigen::VectorXd& eta0, double sigma,
                               const GaussHermiteRule& rule, double mode_start,
                               bool want_grad) {
  const auto [mode, curv] = find_mode(b, eta0, sigma, mode_start);
  const double tau = 1.0 / std::sqrt(curv);
  const double log_phi_const = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma);
  const double inv_var = 1.0 / (sigma * sigma);
  const int K = static_cast<int>(rule.nodes.size());

  std::vector<double> log_terms(K);
  double max_term = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    const double z = rule.nodes[k];
    const double u = mode + std::numbers::sqrt2 * tau * z;
    const double f = block_loglik_at(b, eta0, u) + log_phi_const - 0.5 * u * u * inv_var;
    log_terms[k] = std::log(rule.weights[k]) + z * z + f;
    max_term = std::max(max_term, log_terms[k]);
  }
  double denom = 0.0;
  for (int k = 0; k < K; ++k) denom += std::exp(log_terms[k] - max_term);

  SubjectQuad out;
  out.mode = mode;
  out.log_integral = std::log(std::numbers::sqrt2 * tau) + max_term + std::log(denom);
  out.score_theta = 0.0;
  if (want_grad) {
    out.score_beta = Eigen::VectorXd::Zero(b.X.cols());
    for (int k = 0; k < K; ++k) {
      const double w = std::exp(log_terms[k] - max_term) / denom;
      const double u = mode + std::numbers::sqrt2 * tau * rule.nodes[k];
      for (Eigen::Index j = 0; j < b.y.size(); ++j) {
        const double resid = b.y[j] - logistic(eta0[j] + u);
        out.score_beta += w * resid * b.X.row(j).transpose();
      }
      out.score_theta += w * (u * u * inv_var - 1.0);
    }
  }
  return out;
}

void check_finite(const Eigen::VectorXd& beta) {
  for (Eigen::Index i = 0; i < beta.size(); ++i)
    if (!std::isfinite(beta[i])) throw NonFinite("lgmm: non-finite coefficient");
}

// Shared evaluation core over (beta, theta = log sigma); sigma = 0 is the
// degenerate plain-logistic path.
struct Objective {
  const LgmmDesign& design;
  GaussHermiteRule rule;
  Eigen::VectorXd modes;  // warm starts, one per subject

  Objective(const LgmmDesign& d, int quad_points)
      : design(d),
        rule(gauss_hermite(quad_points)),
        modes(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.subjects.size()))) {}

  double value(const Eigen::VectorXd& beta, double sigma) {
    check_finite(beta);
    double ll = 0.0;
    for (std::size_t i = 0; i < design.subjects.size(); ++i) {
      const auto& b = design.subjects[i];
      const Eigen::VectorXd eta0 = b.X * beta;
      if (sigma <= 0.0) {
        ll += block_loglik_at(b, eta0, 0.0);
        continue;
      }
      const auto q = subject_quadrature(b, eta0, sigma, rule, modes[i], false);
      modes[i] = q.mode;
      ll += q.log_integral;
    }
    if (!std::isfinite(ll)) throw NonFinite("lgmm: log-likelihood is not finite");
    return ll;
  }

  LoglikGradient value_grad(const Eigen::VectorXd& beta, double theta, bool with_theta) {
    check_finite(beta);
    const double sigma = std::exp(theta);
    const Eigen::Index p = beta.size();
    LoglikGradient out;
    out.value = 0.0;
    out.grad = Eigen::VectorXd::Zero(with_theta ? p + 1 : p);
    for (std::size_t i = 0; i < design.subjects.size(); ++i) {
      const auto& b = design.subjects[i];
      const Eigen::VectorXd eta0 = b.X * beta;
      const auto q = subject_quadrature(b, eta0, sigma, rule, modes[i], true);
      modes[i] = q.mode;
      out.value += q.log_integral;
      out.grad.head(p) += q.score_beta;
      if (with_theta) out.grad[p] += q.score_theta;
    }
    if (!std::isfinite(out.value)) throw NonFinite("lgmm: log-likelihood is not finite");
    return out;
  }
};

struct StandardizedDesign {
  LgmmDesign design;         // intercept untouched, covariates z-scored
  Eigen::VectorXd mean, sd;  // per covariate column (excluding intercept)
};

StandardizedDesign standardize_design(const LgmmDesign& src) {
  StandardizedDesign out;
  out.design = src;
  const Eigen::Index p = src.term_names.size();
  out.mean = Eigen::VectorXd::Zero(p - 1);
  out.sd = Eigen::VectorXd::Ones(p - 1);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(p - 1);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(p - 1);
  long n = 0;
  for (const auto& b : src.subjects) {
    n += b.y.size();
    for (Eigen::Index j = 1; j < p; ++j) {
      sum[j - 1] += b.X.col(j).sum();
      sumsq[j - 1] += b.X.col(j).squaredNorm();
    }
  }
  for (Eigen::Index j = 0; j + 1 < p; ++j) {
    out.mean[j] = sum[j] / static_cast<double>(n);
    const double var = n > 1 ? (sumsq[j] - n * out.mean[j] * out.mean[j]) / (n - 1) : 0.0;
    out.sd[j] = var > 1e-20 ? std::sqrt(var) : 1.0;
  }
  for (auto& b : out.design.subjects)
    for (Eigen::Index j = 1; j < p; ++j)
      b.X.col(j) = (b.X.col(j).array() - out.mean[j - 1]) / out.sd[j - 1];
  return out;
}

// beta_original = A * beta_standardized.
Eigen::MatrixXd unscale_matrix(const StandardizedDesign& sd) {
  const Eigen::Index p = sd.mean.size() + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  A(0, 0) = 1.0;
  for (Eigen::Index j = 1; j < p; ++j) {
    A(0, j) = -sd.mean[j - 1] / sd.sd[j - 1];
    A(j, j) = 1.0 / sd.sd[j - 1];
  }
  return A;
}

// Plain logistic regression by damped Newton; returns (beta, inv observed
// information) on the given design scale.
struct NewtonLogistic {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
};

NewtonLogistic newton_logistic(const LgmmDesign& design, double tol, int max_iter) {
  const Eigen::Index p = design.term_names.size();
  Eigen::MatrixXd X(design.n_rows(), p);
  Eigen::VectorXd y(design.n_rows());
  Eigen::Index at = 0;
  for (const auto& b : design.subjects) {
    X.middleRows(at, b.y.size()) = b.X;
    y.segment(at, b.y.size()) = b.y;
    at += b.y.size();
  }

  NewtonLogistic out;
  out.beta = Eigen::VectorXd::Zero(p);
  auto loglik_of = [&](const Eigen::VectorXd& bb) {
    const Eigen::VectorXd eta = X * bb;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - log1pexp(eta[i]);
    return ll;
  };
  double ll = loglik_of(out.beta);
  Eigen::MatrixXd info = Eigen::MatrixXd::Identity(p, p);
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    const Eigen::VectorXd eta = X * out.beta;
    Eigen::VectorXd prob(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      prob[i] = logistic(eta[i]);
      w[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
    }
    const Eigen::VectorXd grad = X.transpose() * (y - prob);
    info = X.transpose() * w.asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const bool usable = ldlt.info() == Eigen::Success &&
                        ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff());
    const Eigen::VectorXd step =
        usable ? ldlt.solve(grad).eval()
               : (info + 1e-8 * std::max(1.0, info.trace() / p) *
                             Eigen::MatrixXd::Identity(p, p))
                     .ldlt()
                     .solve(grad)
                     .eval();
    double alpha = 1.0;
    Eigen::VectorXd cand = out.beta + step;
    double ll_new = loglik_of(cand);
    int halvings = 0;
    while (ll_new < ll && halvings++ < 40) {
      alpha *= 0.5;
      cand = out.beta + alpha * step;
      ll_new = loglik_of(cand);
    }
    const double delta = ll_new - ll;
    out.beta = cand;
    ll = ll_new;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-9 || std::abs(delta) < tol * (1.0 + std::abs(ll))) {
      out.converged = true;
      break;
    }
  }
  out.loglik = ll;
  out.cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  return out;
}

}  // namespace

LgmmDesign LgmmDesign::build(const Dataset& data, const std::vector<std::string>& features) {
  return build_rows(data.select(features), data.keys, features);
}

LgmmDesign LgmmDesign::build_rows(const Eigen::MatrixXd& X_no_intercept,
                                  const std::vector<RowKey>& keys,
                                  const std::vector<std::string>& names) {
  if (X_no_intercept.rows() != static_cast<Eigen::Index>(keys.size()))
    throw LengthMismatch("lgmm design: keys/rows length mismatch");
  LgmmDesign design;
  design.term_names.push_back("(Intercept)");
  for (const auto& n : names) design.term_names.push_back(n);

  std::map<std::string, std::size_t> index;
  std::vector<std::vector<Eigen::Index>> row_lists;
  std::vector<std::string> order;
  for (Eigen::Index i = 0; i < X_no_intercept.rows(); ++i) {
    const auto& sid = keys[i].subject_id;
    auto [it, fresh] = index.try_emplace(sid, row_lists.size());
    if (fresh) {
      row_lists.emplace_back();
      order.push_back(sid);
    }
    row_lists[it->second].push_back(i);
  }
  for (std::size_t s = 0; s < order.size(); ++s) {
    SubjectBlock block;
    block.subject_id = order[s];
    const auto& rows = row_lists[s];
    block.X.resize(static_cast<Eigen::Index>(rows.size()), X_no_intercept.cols() + 1);
    block.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      block.X(static_cast<Eigen::Index>(r), 0) = 1.0;
      block.X.row(static_cast<Eigen::Index>(r)).tail(X_no_intercept.cols()) =
          X_no_intercept.row(rows[r]);
      block.y[static_cast<Eigen::Index>(r)] = keys[rows[r]].outcome;
      block.visits.push_back(keys[rows[r]].visit);
    }
    design.subjects.push_back(std::move(block));
  }
  return design;
}

Eigen::Index LgmmDesign::n_rows() const {
  Eigen::Index n = 0;
  for (const auto& b : subjects) n += b.y.size();
  return n;
}

double lgmm_loglik(const LgmmDesign& design, const Eigen::VectorXd& beta, double sigma_mu,
                   int quad_points) {
  if (quad_points < 1) throw ValidationError("lgmm_loglik: quad_points must be >= 1");
  if (sigma_mu < 0.0) throw ValidationError("lgmm_loglik: sigma_mu must be >= 0");
  Objective obj(design, quad_points);
  return obj.value(beta, sigma_mu);
}

LoglikGradient lgmm_loglik_grad(const LgmmDesign& design, const Eigen::VectorXd& beta,
                                double log_sigma, int quad_points) {
  Objective obj(design, quad_points);
  return obj.value_grad(beta, log_sigma, true);
}

LgmmFit lgmm_fit(const LgmmDesign& design, const LgmmConfig& config) {
  if (design.subjects.size() < 2) throw TooFewSubjects("lgmm_fit: need at least 2 subjects");
  {
    double y_sum = 0.0;
    Eigen::Index n = 0;
    for (const auto& b : design.subjects) {
      y_sum += b.y.sum();
      n += b.y.size();
    }
    if (y_sum == 0.0 || y_sum == static_cast<double>(n))
      throw SingleClass("lgmm_fit: outcomes are all identical");
  }

  const StandardizedDesign sd = config.standardize
                                    ? standardize_design(design)
                                    : StandardizedDesign{design,
                                                         Eigen::VectorXd::Zero(
                                                             design.term_names.size() - 1),
                                                         Eigen::VectorXd::Ones(
                                                             design.term_names.size() - 1)};
  const Eigen::Index p = static_cast<Eigen::Index>(design.term_names.size());
  Objective obj(sd.design, config.quad_points);

  // Start from the plain logistic solution.
  const NewtonLogistic warm = newton_logistic(sd.design, config.tol, 50);
  Eigen::VectorXd gamma = warm.beta;
  double theta = std::log(0.5);

  const Eigen::Index dim = p + 1;
  auto eval = [&](const Eigen::VectorXd& params) {
    return obj.value_grad(params.head(p), params[p], true);
  };
  auto project = [&](Eigen::VectorXd& params) {
    params[p] = std::clamp(params[p], kLogSigmaMin, kLogSigmaMax);
  };
  auto projected_grad = [&](const Eigen::VectorXd& params, Eigen::VectorXd g) {
    if (params[p] <= kLogSigmaMin + 1e-12 && g[p] < 0.0) g[p] = 0.0;
    if (params[p] >= kLogSigmaMax - 1e-12 && g[p] > 0.0) g[p] = 0.0;
    return g;
  };

  Eigen::VectorXd params(dim);
  params.head(p) = gamma;
  params[p] = theta;
  project(params);
  LoglikGradient cur = eval(params);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(dim, dim);

  LgmmFit fit;
  fit.converged = false;
  int it = 0;
  for (; it < config.max_iter; ++it) {
    const Eigen::VectorXd pg = projected_grad(params, cur.grad);
    if (pg.lpNorm<Eigen::Infinity>() < 1e-8) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd dir = Hinv * pg;  // ascent direction
    if (dir.dot(pg) <= 0.0) dir = pg;  // reset on loss of curvature

    double alpha = 1.0;
    Eigen::VectorXd next;
    LoglikGradient cand;
    bool stepped = false;
    for (int ls = 0; ls < 50; ++ls) {
      next = params + alpha * dir;
      project(next);
      if ((next - params).lpNorm<Eigen::Infinity>() < 1e-15) break;
      cand = eval(next);
      if (cand.value >= cur.value + 1e-4 * alpha * pg.dot(dir) ||
          (ls > 0 && cand.value > cur.value)) {
        stepped = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!stepped) break;  // no ascent step found: at a (projected) optimum

    const Eigen::VectorXd s = next - params;
    const Eigen::VectorXd yv = projected_grad(next, cand.grad) - pg;
    const double sy = -s.dot(yv);  // ascent: curvature along the step
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      // BFGS update of the inverse Hessian of the negative log-likelihood.
      const Eigen::VectorXd hy = Hinv * (-yv);
      const double yhy = (-yv).dot(hy);
      Hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
              (hy * s.transpose() + s * hy.transpose()) / sy;
    }

    const double delta = cand.value - cur.value;
    params = next;
    cur = cand;
    const double gnorm = projected_grad(params, cur.grad).lpNorm<Eigen::Infinity>();
    if (std::abs(delta) < config.tol * (1.0 + std::abs(cur.value)) && gnorm < 1e-6) {
      fit.converged = true;
      ++it;
      break;
    }
  }

  gamma = params.head(p);
  theta = params[p];
  const double sigma = std::exp(theta);
  const bool sigma_at_floor = theta <= kLogSigmaMin + 1e-9;

  fit.iterations = it;
  fit.loglik = cur.value;
  fit.sigma_mu = sigma_at_floor ? std::exp(kLogSigmaMin) : sigma;
  fit.term_names = design.term_names;
  fit.quad_points = config.quad_points;
  fit.separation_warning = gamma.tail(p - 1).lpNorm<Eigen::Infinity>() > kSeparationThreshold ||
                           std::abs(gamma[0]) > 2.0 * kSeparationThreshold;

  // Observed information by central differences of the analytic gradient.
  // When sigma sits on its floor the theta direction is excluded.
  const Eigen::Index hdim = sigma_at_floor ? p : dim;
  Eigen::MatrixXd H(hdim, hdim);
  for (Eigen::Index j = 0; j < hdim; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(params[j]));
    Eigen::VectorXd hi = params, lo = params;
    hi[j] += h;
    lo[j] -= h;
    const Eigen::VectorXd gh = eval(hi).grad.head(hdim);
    const Eigen::VectorXd gl = eval(lo).grad.head(hdim);
    H.col(j) = (gh - gl) / (2.0 * h);
  }
  H = 0.5 * (H + H.transpose());
  Eigen::MatrixXd info = -H;
  Eigen::MatrixXd cov_full;
  {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      cov_full = ldlt.solve(Eigen::MatrixXd::Identity(hdim, hdim));
    } else {
      Eigen::MatrixXd ridged =
          info + 1e-8 * std::max(1.0, info.trace() / hdim) * Eigen::MatrixXd::Identity(hdim, hdim);
      cov_full = ridged.ldlt().solve(Eigen::MatrixXd::Identity(hdim, hdim));
    }
  }

  const Eigen::MatrixXd A = unscale_matrix(sd);
  fit.beta = A * gamma;
  fit.cov_beta = A * cov_full.topLeftCorner(p, p) * A.transpose();

  // Posterior modes at the optimum.
  fit.mu_modes.resize(static_cast<Eigen::Index>(design.subjects.size()));
  for (std::size_t i = 0; i < sd.design.subjects.size(); ++i) {
    const auto& b = sd.design.subjects[i];
    const Eigen::VectorXd eta0 = b.X * gamma;
    fit.mu_modes[static_cast<Eigen::Index>(i)] =
        find_mode(b, eta0, fit.sigma_mu, obj.modes[i]).first;
    fit.subject_ids.push_back(b.subject_id);
  }
  return fit;
}

PredictResult lgmm_predict(const LgmmFit& fit, const LgmmDesign& rows, PredictMode mode) {
  if (rows.term_names != fit.term_names)
    throw ValidationError("lgmm_predict: design terms do not match the fit");
  std::map<std::string, double> mode_of;
  for (std::size_t i = 0; i < fit.subject_ids.size(); ++i)
    mode_of[fit.subject_ids[i]] = fit.mu_modes[static_cast<Eigen::Index>(i)];

  PredictResult out;
  out.prob.resize(rows.n_rows());
  Eigen::Index at = 0;
  for (const auto& b : rows.subjects) {
    double shift = 0.0;
    bool unknown = false;
    if (mode == PredictMode::Subject) {
      const auto it = mode_of.find(b.subject_id);
      if (it != mode_of.end()) {
        shift = it->second;
      } else {
        unknown = true;  // fall back to the population curve
      }
    }
    const Eigen::VectorXd eta = (b.X * fit.beta).array() + shift;
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
      out.prob[at++] = logistic(eta[j]);
      out.unknown_subject.push_back(unknown);
    }
  }
  return out;
}

std::string sig_code(double p) {
  if (p < 0.0 || p > 1.0) throw ValidationError("sig_code: p outside [0,1]");
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return "+";
  return "";
}

std::vector<WaldRow> wald_table(const LgmmFit& fit) {
  std::vector<WaldRow> rows;
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    WaldRow row;
    row.name = fit.term_names[static_cast<std::size_t>(j)];
    row.estimate = fit.beta[j];
    const double var = fit.cov_beta(j, j);
    row.se = var > 0.0 ? std::sqrt(var) : 0.0;
    row.ci_lower = row.estimate - 1.96 * row.se;
    row.ci_upper = row.estimate + 1.96 * row.se;
    if (row.se > 0.0) {
      row.p = two_sided_normal_p(row.estimate / row.se);
    } else {
      row.p = row.estimate == 0.0 ? 1.0 : 0.0;
    }
    row.sig = sig_code(row.p);
    rows.push_back(std::move(row));
  }
  return rows;
}

LgmmFit lr_fit(const LgmmDesign& design, const LgmmConfig& config) {
  if (design.subjects.empty()) throw TooFewSubjects("lr_fit: empty design");
  {
    double y_sum = 0.0;
    Eigen::Index n = 0;
    for (const auto& b : design.subjects) {
      y_sum += b.y.sum();
      n += b.y.size();
    }
    if (y_sum == 0.0 || y_sum == static_cast<double>(n))
      throw SingleClass("lr_fit: outcomes are all identical");
  }
  const StandardizedDesign sd = config.standardize
                                    ? standardize_design(design)
                                    : StandardizedDesign{design,
                                                         Eigen::VectorXd::Zero(
                                                             design.term_names.size() - 1),
                                                         Eigen::VectorXd::Ones(
                                                             design.term_names.size() - 1)};
  const NewtonLogistic nl = newton_logistic(sd.design, config.tol, config.max_iter);
  const Eigen::Index p = static_cast<Eigen::Index>(design.term_names.size());

  LgmmFit fit;
  const Eigen::MatrixXd A = unscale_matrix(sd);
  fit.beta = A * nl.beta;
  fit.cov_beta = A * nl.cov * A.transpose();
  fit.sigma_mu = 0.0;
  fit.loglik = nl.loglik;
  fit.converged = nl.converged;
  fit.iterations = nl.iterations;
  fit.term_names = design.term_names;
  fit.quad_points = config.quad_points;
  fit.mu_modes = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design.subjects.size()));
  for (const auto& b : design.subjects) fit.subject_ids.push_back(b.subject_id);
  fit.separation_warning =
      nl.beta.tail(p - 1).lpNorm<Eigen::Infinity>() > kSeparationThreshold ||
      std::abs(nl.beta[0]) > 2.0 * kSeparationThreshold;
  return fit;
}

}  // namespace phenotyper
