#include "phenotyper/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "phenotyper/errors.hpp"
#include "phenotyper/parallel.hpp"
#include "phenotyper/rng.hpp"
#include "phenotyper/stats.hpp"

namespace phenotyper {

namespace {

struct ComponentCache {
  Eigen::Matrix2d inv;
  double log_norm;  // log weight - log(2 pi) - 0.5 log det
};

ComponentCache cache_component(double weight, const Eigen::Matrix2d& cov) {
  ComponentCache c;
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  c.inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
  c.inv /= det;
  c.log_norm = std::log(weight) - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
  return c;
}

Eigen::Matrix2d floor_eigenvalues(const Eigen::Matrix2d& cov, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  Eigen::Vector2d ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// E-step in log space; returns the log-likelihood and fills resp.
double e_step(const Eigen::MatrixXd& Y, const GmmModel& m, Eigen::MatrixXd& resp) {
  const Eigen::Index n = Y.rows();
  const int K = m.K;
  std::vector<ComponentCache> cache(K);
  for (int k = 0; k < K; ++k) cache[k] = cache_component(m.weights[k], m.covariances[k]);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double max_log = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const Eigen::Vector2d d = Y.row(i).transpose() - m.means[k];
      const double lg = cache[k].log_norm - 0.5 * d.dot(cache[k].inv * d);
      resp(i, k) = lg;
      max_log = std::max(max_log, lg);
    }
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += std::exp(resp(i, k) - max_log);
    const double log_total = max_log + std::log(s);
    ll += log_total;
    for (int k = 0; k < K; ++k) resp(i, k) = std::exp(resp(i, k) - log_total);
  }
  return ll;
}

// k-means++ seeding: spread initial means by squared-distance sampling, then
// one hard assignment defines starting weights/means/covariances.
GmmModel seed_model(const Eigen::MatrixXd& Y, int K, const GmmConfig& config, Rng rng) {
  const Eigen::Index n = Y.rows();
  GmmModel m;
  m.K = K;
  m.config = config;
  m.n = n;
  m.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
  m.means.resize(K);
  m.covariances.resize(K);

  std::vector<Eigen::Index> centers;
  centers.push_back(static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (Y.rowwise() - Y.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < K) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (pick = 0; pick < n - 1; ++pick) {
        acc += d2[pick];
        if (u < acc) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin((Y.rowwise() - Y.row(pick)).rowwise().squaredNorm());
  }

  const Eigen::RowVector2d grand_mean = Y.colwise().mean();
  Eigen::Matrix2d grand_cov = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d d = (Y.row(i) - grand_mean).transpose();
    grand_cov += d * d.transpose();
  }
  grand_cov /= static_cast<double>(n);
  grand_cov = floor_eigenvalues(grand_cov, config.cov_eigen_floor);

  std::vector<std::vector<Eigen::Index>> members(K);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (Y.row(i) - Y.row(centers[0])).squaredNorm();
    for (int k = 1; k < K; ++k) {
      const double dk = (Y.row(i) - Y.row(centers[k])).squaredNorm();
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    members[best].push_back(i);
  }
  for (int k = 0; k < K; ++k) {
    if (members[k].empty()) {
      m.means[k] = Y.row(centers[k]).transpose();
      m.covariances[k] = grand_cov;
      continue;
    }
    Eigen::Vector2d mu = Eigen::Vector2d::Zero();
    for (Eigen::Index i : members[k]) mu += Y.row(i).transpose();
    mu /= static_cast<double>(members[k].size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (Eigen::Index i : members[k]) {
      const Eigen::Vector2d d = Y.row(i).transpose() - mu;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(members[k].size());
    m.means[k] = mu;
    m.covariances[k] = floor_eigenvalues(cov, config.cov_eigen_floor);
    m.weights[k] = static_cast<double>(members[k].size()) / static_cast<double>(n);
  }
  const double wsum = m.weights.sum();
  m.weights /= wsum;
  return m;
}

GmmModel run_em(const Eigen::MatrixXd& Y, int K, const GmmConfig& config, Rng rng) {
  const Eigen::Index n = Y.rows();
  GmmModel m = seed_model(Y, K, config, rng.child("seed"));
  Eigen::MatrixXd resp(n, K);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int it = 0; it < config.max_iter; ++it) {
    const double ll = e_step(Y, m, resp);
    m.loglik_trace.push_back(ll);
    m.loglik = ll;
    if (std::abs(ll - prev_ll) < config.tol * (1.0 + std::abs(ll))) {
      m.converged = true;
      break;
    }
    prev_ll = ll;

    // M-step with degenerate-component rescue.
    for (int k = 0; k < K; ++k) {
      const double nk = resp.col(k).sum();
      if (nk < 1e-6 * static_cast<double>(n)) {
        if (++m.rescued_components > 3)
          throw DegenerateComponent("gmm: component collapsed repeatedly");
        const Eigen::Index pick =
            static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        m.means[k] = Y.row(pick).transpose();
        Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
        const Eigen::RowVector2d mu = Y.colwise().mean();
        for (Eigen::Index i = 0; i < n; ++i) {
          const Eigen::Vector2d d = (Y.row(i) - mu).transpose();
          cov += d * d.transpose();
        }
        m.covariances[k] = floor_eigenvalues(cov / static_cast<double>(n), config.cov_eigen_floor);
        m.weights[k] = 1.0 / static_cast<double>(n);
        continue;
      }
      Eigen::Vector2d mu = Eigen::Vector2d::Zero();
      for (Eigen::Index i = 0; i < n; ++i) mu += resp(i, k) * Y.row(i).transpose();
      mu /= nk;
      Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector2d d = Y.row(i).transpose() - mu;
        cov += resp(i, k) * (d * d.transpose());
      }
      cov /= nk;
      m.weights[k] = nk / static_cast<double>(n);
      m.means[k] = mu;
      m.covariances[k] = floor_eigenvalues(cov, config.cov_eigen_floor);
    }
    const double wsum = m.weights.sum();
    m.weights /= wsum;
  }
  m.bic = gmm_bic(K, n, m.loglik);
  return m;
}

void sort_components(GmmModel& m) {
  std::vector<int> order(m.K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (m.means[a][0] != m.means[b][0]) return m.means[a][0] < m.means[b][0];
    return m.means[a][1] < m.means[b][1];
  });
  GmmModel sorted = m;
  for (int k = 0; k < m.K; ++k) {
    sorted.weights[k] = m.weights[order[k]];
    sorted.means[k] = m.means[order[k]];
    sorted.covariances[k] = m.covariances[order[k]];
  }
  m = std::move(sorted);
}

}  // namespace

GmmModel gmm_fit_em(const Eigen::MatrixXd& Y, int K, const GmmConfig& config) {
  if (Y.cols() != 2) throw ValidationError("gmm: expected 2-D points");
  if (K < 1) throw ValidationError("gmm: K must be >= 1");
  if (Y.rows() < 3L * K) throw ValidationError("gmm: need at least 3K points");

  const Rng root = Rng(config.seed).child("gmm");
  std::vector<GmmModel> runs(config.restarts);
  std::vector<char> failed(config.restarts, 0);
  parallel_for(static_cast<std::size_t>(config.restarts), [&](std::size_t r) {
    try {
      runs[r] = run_em(Y, K, config, root.child(r));
    } catch (const DegenerateComponent&) {
      failed[r] = 1;
    }
  });
  int best = -1;
  for (int r = 0; r < config.restarts; ++r) {
    if (failed[r]) continue;
    if (best < 0 || runs[r].loglik > runs[best].loglik) best = r;
  }
  if (best < 0) throw DegenerateComponent("gmm: every restart collapsed");
  GmmModel model = std::move(runs[best]);
  sort_components(model);
  return model;
}

double gmm_bic(int K, long n, double loglik) {
  const double params = static_cast<double>(K - 1 + 2 * K + 3 * K);
  return params * std::log(static_cast<double>(n)) - 2.0 * loglik;
}

SelectKResult select_k(const Eigen::MatrixXd& Y, int k_min, int k_max, const GmmConfig& config) {
  if (k_min < 1 || k_max < k_min) throw ValidationError("select_k: bad K range");
  SelectKResult out;
  for (int k = k_min; k <= k_max; ++k) out.models.push_back(gmm_fit_em(Y, k, config));
  out.best_k = k_min;
  double best_bic = out.models.front().bic;
  for (std::size_t i = 1; i < out.models.size(); ++i) {
    if (out.models[i].bic < best_bic) {  // ties keep the smaller K
      best_bic = out.models[i].bic;
      out.best_k = k_min + static_cast<int>(i);
    }
  }
  return out;
}

ClusterAssignment assign_clusters(const GmmModel& model, const Eigen::MatrixXd& Y) {
  ClusterAssignment out;
  out.responsibilities.resize(Y.rows(), model.K);
  e_step(Y, model, out.responsibilities);
  out.labels.resize(Y.rows());
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    int arg = 0;
    for (int k = 1; k < model.K; ++k)
      if (out.responsibilities(i, k) > out.responsibilities(i, arg)) arg = k;
    out.labels[i] = arg;
  }
  return out;
}

}  // namespace phenotyper
