#include "phenotyper/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phenotyper/errors.hpp"
#include "phenotyper/rng.hpp"
#include "phenotyper/stats.hpp"

namespace phenotyper {

int Codebook::encode(const std::string& feature, const std::string& label) const {
  const auto it = levels.find(feature);
  if (it == levels.end()) throw UnknownLevel("codebook has no feature '" + feature + "'");
  const auto& lv = it->second;
  const auto pos = std::lower_bound(lv.begin(), lv.end(), label);
  if (pos == lv.end() || *pos != label)
    throw UnknownLevel("feature '" + feature + "' has no level '" + label + "'");
  return static_cast<int>(pos - lv.begin());
}

const std::string& Codebook::decode(const std::string& feature, int code) const {
  const auto it = levels.find(feature);
  if (it == levels.end()) throw UnknownLevel("codebook has no feature '" + feature + "'");
  if (code < 0 || code >= static_cast<int>(it->second.size()))
    throw UnknownLevel("feature '" + feature + "' has no code " + std::to_string(code));
  return it->second[code];
}

int EncodedMatrix::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].name == name) return static_cast<int>(j);
  return -1;
}

std::pair<EncodedMatrix, Codebook> encode_categoricals(const Cohort& cohort) {
  const Eigen::Index n = static_cast<Eigen::Index>(cohort.rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(cohort.specs.size());

  Codebook book;
  for (const auto& spec : cohort.specs) {
    if (spec.kind != FeatureKind::Categorical) continue;
    std::vector<std::string> sorted = spec.levels;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    book.levels[spec.name] = std::move(sorted);
  }

  EncodedMatrix out;
  out.values = Eigen::MatrixXd::Zero(n, p);
  out.missing = BoolGrid::Constant(n, p, false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& spec = cohort.specs[j];
    out.columns.push_back({spec.name, spec.kind,
                           spec.kind == FeatureKind::Categorical
                               ? static_cast<int>(book.levels[spec.name].size())
                               : 0});
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Observation& row = cohort.rows[i];
    for (Eigen::Index j = 0; j < p; ++j) {
      if (row.missing[j]) {
        out.missing(i, j) = true;
        continue;
      }
      if (cohort.specs[j].kind == FeatureKind::Categorical) {
        out.values(i, j) = book.encode(cohort.specs[j].name, std::get<std::string>(row.values[j]));
      } else {
        out.values(i, j) = std::get<double>(row.values[j]);
      }
    }
  }
  return {std::move(out), std::move(book)};
}

namespace {

// Observed-cell mean/sd per column, for distance standardization.
void observed_moments(const Eigen::MatrixXd& v, const BoolGrid& miss, Eigen::VectorXd& mean,
                      Eigen::VectorXd& sd) {
  const Eigen::Index n = v.rows(), p = v.cols();
  mean.setZero(p);
  sd.setOnes(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double s = 0.0;
    long cnt = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!miss(i, j)) {
        s += v(i, j);
        ++cnt;
      }
    if (cnt == 0) continue;
    mean[j] = s / cnt;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!miss(i, j)) ss += (v(i, j) - mean[j]) * (v(i, j) - mean[j]);
    const double var = cnt > 1 ? ss / (cnt - 1) : 0.0;
    sd[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

double column_mean_or_mode(const Eigen::MatrixXd& v, const BoolGrid& miss, Eigen::Index col,
                           bool categorical) {
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    if (!miss(i, col)) vals.push_back(v(i, col));
  if (vals.empty()) throw InsufficientDonors("column " + std::to_string(col) + " fully missing");
  if (!categorical) return mean(vals);
  std::map<double, int> counts;
  for (double x : vals) counts[x]++;
  double best = vals[0];
  int best_n = -1;
  for (const auto& [code, cnt] : counts)
    if (cnt > best_n) {  // map order makes ties pick the smallest code
      best = code;
      best_n = cnt;
    }
  return best;
}

}  // namespace

ImputeResult impute_knn(const EncodedMatrix& m, int k) {
  if (k < 1) throw ValidationError("impute_knn: k must be >= 1");
  const Eigen::Index n = m.values.rows(), p = m.values.cols();

  Eigen::VectorXd col_mean, col_sd;
  observed_moments(m.values, m.missing, col_mean, col_sd);
  Eigen::MatrixXd z = m.values;
  for (Eigen::Index j = 0; j < p; ++j)
    z.col(j) = (z.col(j).array() - col_mean[j]) / col_sd[j];

  std::vector<long> observed_per_col(p, 0);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (!m.missing(i, j)) observed_per_col[j]++;

  ImputeResult out;
  out.values = m.values;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!m.missing(i, j)) continue;
      if (observed_per_col[j] < k)
        throw InsufficientDonors("impute_knn: column " + m.columns[j].name + " has " +
                                 std::to_string(observed_per_col[j]) + " observed rows, need " +
                                 std::to_string(k));
      // Distance to every row that observes column j, over columns observed
      // in both rows. Rows sharing no observed column are unusable.
      std::vector<std::pair<double, Eigen::Index>> donors;
      for (Eigen::Index r = 0; r < n; ++r) {
        if (r == i || m.missing(r, j)) continue;
        double d2 = 0.0;
        long shared = 0;
        for (Eigen::Index c = 0; c < p; ++c) {
          if (m.missing(i, c) || m.missing(r, c)) continue;
          const double diff = z(i, c) - z(r, c);
          d2 += diff * diff;
          ++shared;
        }
        if (shared == 0) continue;
        donors.emplace_back(d2, r);
      }
      // Binary columns take the mode as well, keeping cells in {0, 1}.
      const bool categorical = m.columns[j].kind != FeatureKind::Continuous;
      if (donors.empty()) {
        out.values(i, j) = column_mean_or_mode(m.values, m.missing, j, categorical);
        out.fallback_cells.emplace_back(static_cast<int>(i), static_cast<int>(j));
        continue;
      }
      std::stable_sort(donors.begin(), donors.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), donors.size());
      if (categorical) {
        std::map<double, int> counts;
        for (std::size_t t = 0; t < take; ++t) counts[m.values(donors[t].second, j)]++;
        double best = 0.0;
        int best_n = -1;
        for (const auto& [code, cnt] : counts)
          if (cnt > best_n) {
            best = code;
            best_n = cnt;
          }
        out.values(i, j) = best;
      } else {
        double s = 0.0;
        for (std::size_t t = 0; t < take; ++t) s += m.values(donors[t].second, j);
        out.values(i, j) = s / static_cast<double>(take);
      }
    }
  }
  return out;
}

OutlierReport mahalanobis_outliers(const Eigen::MatrixXd& m, double alpha) {
  const Eigen::Index n = m.rows(), p = m.cols();
  if (alpha <= 0.0 || alpha >= 1.0) throw ValidationError("mahalanobis: alpha must be in (0,1)");
  if (n <= p)
    throw ValidationError("mahalanobis: need more rows than columns for a stable covariance");

  const Eigen::RowVectorXd mu = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - mu;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

  auto invert = [&](const Eigen::MatrixXd& s) -> std::pair<bool, Eigen::MatrixXd> {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return {false, {}};
    const Eigen::VectorXd d = ldlt.vectorD();
    if (d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff())) return {false, {}};
    return {true, ldlt.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()))};
  };

  auto [ok, inv] = invert(cov);
  if (!ok) {
    const double ridge = 1e-8 * cov.trace() / static_cast<double>(p);
    cov += ridge * Eigen::MatrixXd::Identity(p, p);
    std::tie(ok, inv) = invert(cov);
    if (!ok) throw SingularCovariance("mahalanobis: covariance singular after regularization");
  }

  OutlierReport report;
  report.alpha = alpha;
  report.dof = static_cast<int>(p);
  report.threshold = chi2_quantile(1.0 - alpha, static_cast<double>(p));
  report.d2.resize(n);
  report.flags.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = centered.row(i).transpose();
    report.d2[i] = x.dot(inv * x);
    report.flags[i] = report.d2[i] > report.threshold;
  }
  return report;
}

Eigen::RowVectorXd smote_interpolate(const Eigen::RowVectorXd& parent,
                                     const Eigen::RowVectorXd& neighbor, double lambda,
                                     const std::vector<ColumnInfo>& columns) {
  Eigen::RowVectorXd out = parent;
  for (Eigen::Index j = 0; j < parent.size(); ++j) {
    if (columns[j].kind == FeatureKind::Categorical) continue;  // copy the parent code
    out[j] = parent[j] + lambda * (neighbor[j] - parent[j]);
  }
  return out;
}

SmoteResult smote_oversample(const Eigen::MatrixXd& m, const std::vector<int>& labels,
                             int percent, int k, std::uint64_t seed, SmoteClasses which,
                             const std::vector<ColumnInfo>& columns) {
  if (static_cast<Eigen::Index>(labels.size()) != m.rows())
    throw LengthMismatch("smote: labels/rows length mismatch");
  if (percent < 0 || percent % 100 != 0)
    throw ValidationError("smote: percent must be a non-negative multiple of 100");
  if (k < 1) throw ValidationError("smote: k must be >= 1");

  SmoteResult out;
  out.values = m;
  out.labels = labels;
  out.synthetic.assign(labels.size(), false);
  out.parent.assign(labels.size(), -1);
  if (percent == 0 || m.rows() == 0) return out;

  long n0 = 0, n1 = 0;
  for (int y : labels) (y == 0 ? n0 : n1)++;
  std::vector<int> targets;
  if (which == SmoteClasses::Both) {
    targets = {0, 1};
  } else {
    targets = {n1 <= n0 ? 1 : 0};
  }

  // Neighbor distances over standardized columns.
  Eigen::MatrixXd z = m;
  standardize_columns(z);
  const int rounds = percent / 100;
  Rng root = Rng(seed).child("smote");

  for (int cls : targets) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (labels[i] == cls) members.push_back(i);
    if (members.size() < 2)
      throw DegenerateClass("smote: class " + std::to_string(cls) + " has fewer than 2 members");
    int kk = k;
    if (static_cast<int>(members.size()) - 1 < kk) {
      kk = static_cast<int>(members.size()) - 1;
      out.k_clamped = true;
    }
    // k nearest same-class neighbours per member, ties by row index.
    std::vector<std::vector<Eigen::Index>> nns(members.size());
    for (std::size_t a = 0; a < members.size(); ++a) {
      std::vector<std::pair<double, Eigen::Index>> dists;
      for (std::size_t b = 0; b < members.size(); ++b) {
        if (a == b) continue;
        const double d2 = (z.row(members[a]) - z.row(members[b])).squaredNorm();
        dists.emplace_back(d2, members[b]);
      }
      std::stable_sort(dists.begin(), dists.end(),
                       [](const auto& x, const auto& y) { return x.first < y.first; });
      for (int t = 0; t < kk; ++t) nns[a].push_back(dists[t].second);
    }
    for (int round = 0; round < rounds; ++round) {
      for (std::size_t a = 0; a < members.size(); ++a) {
        Rng rng = root.child(static_cast<std::uint64_t>(cls)).child(round).child(a);
        const Eigen::Index nb = nns[a][rng.uniform_int(nns[a].size())];
        const double lambda = rng.uniform();
        const Eigen::RowVectorXd synth =
            smote_interpolate(m.row(members[a]), m.row(nb), lambda, columns);
        out.values.conservativeResize(out.values.rows() + 1, Eigen::NoChange);
        out.values.row(out.values.rows() - 1) = synth;
        out.labels.push_back(cls);
        out.synthetic.push_back(true);
        out.parent.push_back(static_cast<int>(members[a]));
      }
    }
  }
  return out;
}

EncodedMatrix augment_quadratic(const EncodedMatrix& m, const std::vector<std::string>& names) {
  EncodedMatrix out = m;
  for (const auto& name : names) {
    const int j = m.column_index(name);
    if (j < 0) throw ValidationError("augment_quadratic: no column '" + name + "'");
    if (m.columns[j].kind != FeatureKind::Continuous)
      throw NotContinuous("augment_quadratic: '" + name + "' is not continuous");
    const Eigen::Index col = out.values.cols();
    out.values.conservativeResize(Eigen::NoChange, col + 1);
    out.missing.conservativeResize(Eigen::NoChange, col + 1);
    out.values.col(col) = m.values.col(j).array().square();
    out.missing.col(col) = m.missing.col(j);
    // Squared cells of missing sources stay missing; zero the value slot.
    for (Eigen::Index i = 0; i < out.values.rows(); ++i)
      if (out.missing(i, col)) out.values(i, col) = 0.0;
    out.columns.push_back({name + "^2", FeatureKind::Continuous, 0});
  }
  return out;
}

}  // namespace phenotyper
