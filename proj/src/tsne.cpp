#include "phenotyper/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "phenotyper/errors.hpp"
#include "phenotyper/parallel.hpp"
#include "phenotyper/rng.hpp"
#include "phenotyper/stats.hpp"

namespace phenotyper {

namespace {

constexpr double kEps = 1e-12;

// Perplexity = exp(Shannon entropy) of the conditional row at precision beta.
double row_perplexity(const Eigen::VectorXd& d, double beta, Eigen::VectorXd* out_p) {
  const double dmin = d.minCoeff();
  Eigen::VectorXd p = (-(d.array() - dmin) * beta).exp();
  const double s = p.sum();
  p /= s;
  double entropy = 0.0;  // nats
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) entropy -= p[j] * std::log(p[j]);
  if (out_p) *out_p = p;
  return std::exp(entropy);
}

}  // namespace

Eigen::VectorXd perplexity_calibration(const Eigen::VectorXd& sq_dists, double perplexity,
                                       CalibrationInfo* info) {
  const Eigen::Index m = sq_dists.size();
  if (m < 2) throw CalibrationFailed("perplexity_calibration: need at least 2 neighbours");
  for (Eigen::Index j = 0; j < m; ++j)
    if (!std::isfinite(sq_dists[j]) || sq_dists[j] < 0.0)
      throw CalibrationFailed("perplexity_calibration: invalid distance");

  CalibrationInfo local;
  CalibrationInfo& out = info ? *info : local;
  out = {};

  // All-equal distances force a uniform row at every bandwidth; no bracket
  // exists unless the target happens to equal the row length.
  const double spread = sq_dists.maxCoeff() - sq_dists.minCoeff();
  if (spread <= 0.0) {
    out.degenerate = std::abs(static_cast<double>(m) - perplexity) > 1e-5;
    out.beta = 1.0;
    out.achieved_perplexity = static_cast<double>(m);
    return Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  }

  double beta = 1.0;
  Eigen::VectorXd p;
  double perp = row_perplexity(sq_dists, beta, &p);

  // Bracket the target: perplexity is decreasing in beta.
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  int guard = 0;
  while (perp > perplexity && guard++ < 200) {
    lo = beta;
    beta *= 2.0;
    perp = row_perplexity(sq_dists, beta, &p);
  }
  guard = 0;
  while (perp < perplexity && guard++ < 200) {
    hi = beta;
    beta *= 0.5;
    perp = row_perplexity(sq_dists, beta, &p);
  }
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw CalibrationFailed("perplexity_calibration: could not bracket the bandwidth");

  for (int it = 0; it < 50 && std::abs(perp - perplexity) > 1e-5; ++it) {
    out.iterations = it + 1;
    if (perp > perplexity) {
      lo = beta;
      beta = std::isfinite(hi) ? 0.5 * (beta + hi) : beta * 2.0;
    } else {
      hi = beta;
      beta = lo > 0.0 ? 0.5 * (beta + lo) : beta * 0.5;
    }
    perp = row_perplexity(sq_dists, beta, &p);
  }
  out.beta = beta;
  out.achieved_perplexity = perp;
  return p;
}

Eigen::MatrixXd tsne_joint_probabilities(const Eigen::MatrixXd& X, const TsneConfig& config,
                                         int* degenerate_rows) {
  const Eigen::Index n = X.rows();
  if (config.perplexity <= 1.0 || config.perplexity >= static_cast<double>(n - 1))
    throw ValidationError("tsne: perplexity must be in (1, n-1)");

  Eigen::MatrixXd Z = X;
  if (config.standardize_input) standardize_columns(Z);

  // Pairwise squared Euclidean distances.
  Eigen::VectorXd norms(n);
  for (Eigen::Index i = 0; i < n; ++i) norms[i] = Z.row(i).squaredNorm();
  Eigen::MatrixXd D = -2.0 * (Z * Z.transpose());
  D.colwise() += norms;
  D.rowwise() += norms.transpose();
  D = D.cwiseMax(0.0);

  Eigen::MatrixXd cond = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> degenerate(n, 0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    Eigen::VectorXd row(n - 1);
    Eigen::Index at = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != static_cast<Eigen::Index>(i)) row[at++] = D(i, j);
    CalibrationInfo info;
    const Eigen::VectorXd p = perplexity_calibration(row, config.perplexity, &info);
    degenerate[i] = info.degenerate ? 1 : 0;
    at = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != static_cast<Eigen::Index>(i)) cond(i, j) = p[at++];
  });
  if (degenerate_rows) {
    *degenerate_rows = 0;
    for (int d : degenerate) *degenerate_rows += d;
  }
  return (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
}

TsneCostGrad tsne_cost_grad(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y) {
  const Eigen::Index n = Y.rows();
  if (P.rows() != n || P.cols() != n) throw LengthMismatch("tsne_cost_grad: P/Y size mismatch");

  Eigen::MatrixXd num(n, n);
  std::vector<double> rowZ(n, 0.0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    double z = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == static_cast<Eigen::Index>(i)) {
        num(i, j) = 0.0;
        continue;
      }
      const double d2 = (Y.row(i) - Y.row(j)).squaredNorm();
      num(i, j) = 1.0 / (1.0 + d2);
      z += num(i, j);
    }
    rowZ[i] = z;
  });
  double Z = 0.0;
  for (double z : rowZ) Z += z;
  Z = std::max(Z, kEps);

  TsneCostGrad out;
  out.grad.setZero(n, 2);
  std::vector<double> row_cost(n, 0.0);
  const double invZ = 1.0 / Z;
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    double c = 0.0;
    Eigen::RowVector2d g = Eigen::RowVector2d::Zero();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == static_cast<Eigen::Index>(i)) continue;
      const double q = std::max(num(i, j) * invZ, kEps);
      const double p = P(i, j);
      if (p > 0.0) c += p * std::log(std::max(p, kEps) / q);
      g += (p - q) * num(i, j) * (Y.row(i) - Y.row(j));
    }
    row_cost[i] = c;
    out.grad.row(i) = 4.0 * g;
  });
  out.cost = 0.0;
  for (double c : row_cost) out.cost += c;
  return out;
}

namespace {

std::uint64_t row_content_hash(const Eigen::MatrixXd& X, Eigen::Index i) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    std::uint64_t bits;
    const double v = X(i, j);
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

Eigen::MatrixXd pca_init(const Eigen::MatrixXd& Z) {
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd centered = Z.rowwise() - Z.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd Y(n, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(es.eigenvectors().cols() - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;  // deterministic sign
    Y.col(c) = centered * v;
    const double sd = std::sqrt(Y.col(c).squaredNorm() / std::max<double>(1.0, n - 1));
    if (sd > 0.0) Y.col(c) *= 1e-4 / sd;
  }
  return Y;
}

}  // namespace

Embedding tsne_embed(const Eigen::MatrixXd& X, const TsneConfig& config) {
  const Eigen::Index n = X.rows();
  if (n < 5) throw ValidationError("tsne_embed: need at least 5 points");

  Embedding emb;
  emb.config = config;
  const Eigen::MatrixXd P = tsne_joint_probabilities(X, config, &emb.degenerate_rows);

  Eigen::MatrixXd Z = X;
  if (config.standardize_input) standardize_columns(Z);

  Eigen::MatrixXd Y(n, 2);
  if (config.init == TsneConfig::Init::Pca) {
    Y = pca_init(Z);
  } else {
    // Each point draws its own stream keyed by row content, so permuting
    // input rows permutes the embedding rows with them.
    const Rng root = Rng(config.seed).child("tsne-init");
    for (Eigen::Index i = 0; i < n; ++i) {
      Rng rng = root.child(row_content_hash(Z, i));
      Y(i, 0) = 1e-4 * rng.normal();
      Y(i, 1) = 1e-4 * rng.normal();
    }
  }

  Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  emb.cost_trace.reserve(config.total_iters + 1);

  for (int it = 0; it < config.total_iters; ++it) {
    const bool exaggerating = it < config.exaggeration_iters;
    const double c = exaggerating ? config.early_exaggeration : 1.0;
    const double momentum =
        it < config.momentum_switch_iter ? config.momentum_start : config.momentum_final;

    // One pairwise pass yields the plain-P cost for the trace and the
    // gradient against the exaggerated P.
    Eigen::MatrixXd num(n, n);
    std::vector<double> rowZ(n, 0.0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      double z = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == static_cast<Eigen::Index>(i)) {
          num(i, j) = 0.0;
          continue;
        }
        num(i, j) = 1.0 / (1.0 + (Y.row(i) - Y.row(j)).squaredNorm());
        z += num(i, j);
      }
      rowZ[i] = z;
    });
    double Zsum = 0.0;
    for (double z : rowZ) Zsum += z;
    const double invZ = 1.0 / std::max(Zsum, kEps);

    Eigen::MatrixXd grad(n, 2);
    std::vector<double> row_cost(n, 0.0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      double cost_i = 0.0;
      Eigen::RowVector2d g = Eigen::RowVector2d::Zero();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == static_cast<Eigen::Index>(i)) continue;
        const double q = std::max(num(i, j) * invZ, kEps);
        const double p = P(i, j);
        if (p > 0.0) cost_i += p * std::log(std::max(p, kEps) / q);
        g += (c * p - q) * num(i, j) * (Y.row(i) - Y.row(j));
      }
      row_cost[i] = cost_i;
      grad.row(i) = 4.0 * g;
    });
    double cost = 0.0;
    for (double ci : row_cost) cost += ci;
    emb.cost_trace.push_back(cost);

    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        const bool same_sign = (grad(i, d) > 0.0) == (inc(i, d) > 0.0);
        gains(i, d) = same_sign ? std::max(gains(i, d) * 0.8, 0.01) : gains(i, d) + 0.2;
        inc(i, d) = momentum * inc(i, d) - config.learning_rate * gains(i, d) * grad(i, d);
        Y(i, d) += inc(i, d);
      }
    }
    Y.rowwise() -= Y.colwise().mean().eval();
  }
  emb.cost_trace.push_back(tsne_cost_grad(P, Y).cost);
  emb.coords = std::move(Y);
  return emb;
}

}  // namespace phenotyper
