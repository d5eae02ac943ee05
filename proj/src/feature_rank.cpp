#include "phenotyper/feature_rank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phenotyper/errors.hpp"
#include "phenotyper/folds.hpp"
#include "phenotyper/parallel.hpp"
#include "phenotyper/rng.hpp"

namespace phenotyper {

double gini_impurity(const std::vector<long>& class_counts) {
  long total = 0;
  for (long c : class_counts) {
    if (c < 0) throw ValidationError("gini: negative class count");
    total += c;
  }
  if (total == 0) throw EmptyNode("gini: empty node");
  double g = 1.0;
  for (long c : class_counts) {
    const double f = static_cast<double>(c) / static_cast<double>(total);
    g -= f * f;
  }
  return g;
}

namespace {

struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const std::vector<int>& y;
  int mtry;
  int min_leaf;
  int max_depth;
  Rng rng;
  Tree tree;
  Eigen::VectorXd importance;  // unnormalized Gini decrease, this tree
  double n_bag;

  int build(std::vector<int>& rows, int depth) {
    long n1 = 0;
    for (int r : rows) n1 += y[r];
    const long n = static_cast<long>(rows.size());
    const int majority = 2 * n1 > n ? 1 : (2 * n1 < n ? 0 : 0);  // ties -> class 0

    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({-1, 0.0, -1, -1, majority});

    if (n1 == 0 || n1 == n || n < 2 * min_leaf ||
        (max_depth >= 0 && depth >= max_depth))
      return node_id;

    const double g_node = 1.0 - [&] {
      const double f1 = static_cast<double>(n1) / n;
      return f1 * f1 + (1.0 - f1) * (1.0 - f1);
    }();

    // Sample mtry candidate features without replacement, then scan them in
    // ascending index order so split ties resolve deterministically.
    const int p = static_cast<int>(X.cols());
    std::vector<int> candidates(p);
    std::iota(candidates.begin(), candidates.end(), 0);
    for (int i = 0; i < mtry; ++i) {
      const std::size_t j = i + rng.uniform_int(static_cast<std::uint64_t>(p - i));
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(mtry);
    std::sort(candidates.begin(), candidates.end());

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_decrease = 1e-12;  // require a strictly positive decrease

    std::vector<std::pair<double, int>> vals(rows.size());
    for (int f : candidates) {
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {X(rows[i], f), y[rows[i]]};
      std::sort(vals.begin(), vals.end());
      long left1 = 0;
      for (long left_n = 1; left_n < n; ++left_n) {
        left1 += vals[left_n - 1].second;
        if (vals[left_n - 1].first == vals[left_n].first) continue;  // not a boundary
        if (left_n < min_leaf || n - left_n < min_leaf) continue;
        const double fl = static_cast<double>(left1) / left_n;
        const double fr = static_cast<double>(n1 - left1) / (n - left_n);
        const double g_left = 2.0 * fl * (1.0 - fl);
        const double g_right = 2.0 * fr * (1.0 - fr);
        const double decrease =
            g_node - (left_n * g_left + (n - left_n) * g_right) / static_cast<double>(n);
        if (decrease > best_decrease) {
          best_decrease = decrease;
          best_feature = f;
          best_threshold = 0.5 * (vals[left_n - 1].first + vals[left_n].first);
        }
      }
    }
    if (best_feature < 0) return node_id;  // no admissible split

    importance[best_feature] += (static_cast<double>(n) / n_bag) * best_decrease;

    std::vector<int> left_rows, right_rows;
    for (int r : rows) (X(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    tree.nodes[node_id].left = build(left_rows, depth + 1);
    tree.nodes[node_id].right = build(right_rows, depth + 1);
    return node_id;
  }
};

}  // namespace

Forest fit_random_forest(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         const ForestConfig& config) {
  const Eigen::Index n = X.rows();
  const int p = static_cast<int>(X.cols());
  if (static_cast<Eigen::Index>(y.size()) != n)
    throw LengthMismatch("forest: labels/rows length mismatch");
  if (config.n_trees < 1) throw ValidationError("forest: n_trees must be >= 1");
  long n1 = 0;
  for (int v : y) n1 += v;
  if (n1 == 0 || n1 == n) throw SingleClass("forest: outcome is constant");

  const int mtry = config.mtry > 0
                       ? std::min(config.mtry, p)
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));

  Forest forest;
  forest.config = config;
  forest.config.mtry = mtry;
  forest.n_features = p;
  forest.trees.resize(config.n_trees);
  std::vector<Eigen::VectorXd> tree_importance(config.n_trees);

  const Rng root = Rng(config.seed).child("forest");
  parallel_for(static_cast<std::size_t>(config.n_trees), [&](std::size_t t) {
    Rng rng = root.child(t);
    std::vector<int> rows(n);
    std::vector<bool> in_bag(n, false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int r = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      rows[i] = r;
      in_bag[r] = true;
    }
    TreeBuilder builder{X,   y,      mtry,
                        config.min_leaf, config.max_depth, std::move(rng),
                        {},  Eigen::VectorXd::Zero(p), static_cast<double>(n)};
    builder.build(rows, 0);
    builder.tree.in_bag = std::move(in_bag);
    forest.trees[t] = std::move(builder.tree);
    tree_importance[t] = std::move(builder.importance);
  });

  Eigen::VectorXd total = Eigen::VectorXd::Zero(p);
  for (const auto& imp : tree_importance) total += imp;
  total /= static_cast<double>(config.n_trees);
  const double s = total.sum();
  forest.importances = s > 0.0 ? Eigen::VectorXd(total / s) : total;
  return forest;
}

int tree_predict(const Tree& tree, const Eigen::RowVectorXd& x) {
  int node = 0;
  while (tree.nodes[node].feature >= 0) {
    node = x[tree.nodes[node].feature] <= tree.nodes[node].threshold ? tree.nodes[node].left
                                                                     : tree.nodes[node].right;
  }
  return tree.nodes[node].prediction;
}

std::vector<int> forest_predict(const Forest& forest, const Eigen::MatrixXd& X) {
  std::vector<int> out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    long votes = 0;
    for (const auto& tree : forest.trees) votes += tree_predict(tree, X.row(i));
    out[i] = 2 * votes > static_cast<long>(forest.trees.size()) ? 1 : 0;
  }
  return out;
}

std::vector<int> oob_predict(const Forest& forest, const Eigen::MatrixXd& X) {
  std::vector<int> out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    long votes = 0, counted = 0;
    for (const auto& tree : forest.trees) {
      if (i < static_cast<Eigen::Index>(tree.in_bag.size()) && tree.in_bag[i]) continue;
      votes += tree_predict(tree, X.row(i));
      ++counted;
    }
    if (counted == 0) {
      for (const auto& tree : forest.trees) votes += tree_predict(tree, X.row(i));
      counted = static_cast<long>(forest.trees.size());
    }
    out[i] = 2 * votes > counted ? 1 : 0;
  }
  return out;
}

ImportanceTable rank_features(const Dataset& data, const RankConfig& config) {
  const int p = static_cast<int>(data.columns.size());
  const FoldSplit split = stratified_subject_folds(data.keys, config.folds, config.seed);
  Eigen::MatrixXd per_fold(p, config.folds);

  for (int f = 0; f < config.folds; ++f) {
    std::vector<int> train_rows;
    for (std::size_t i = 0; i < data.keys.size(); ++i)
      if (split.fold_of(data.keys[i].subject_id) != f) train_rows.push_back(static_cast<int>(i));
    Eigen::MatrixXd Xtr(train_rows.size(), p);
    std::vector<int> ytr(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      Xtr.row(i) = data.X.row(train_rows[i]);
      ytr[i] = data.keys[train_rows[i]].outcome;
    }
    if (config.smote_percent > 0) {
      const SmoteResult sm =
          smote_oversample(Xtr, ytr, config.smote_percent, config.smote_k,
                           Rng(config.seed).child("rank-smote").child(f).next_u64(),
                           config.smote_classes, data.columns);
      Xtr = sm.values;
      ytr = sm.labels;
    }
    ForestConfig fc = config.forest;
    fc.seed = Rng(config.seed).child("rank-forest").child(f).next_u64();
    const Forest forest = fit_random_forest(Xtr, ytr, fc);
    per_fold.col(f) = forest.importances;
  }

  const Eigen::VectorXd means = per_fold.rowwise().mean();
  std::vector<int> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return means[a] > means[b]; });

  ImportanceTable table;
  table.per_fold.resize(p, config.folds);
  for (int r = 0; r < p; ++r) {
    table.feature.push_back(data.columns[order[r]].name);
    table.mean_importance.push_back(means[order[r]]);
    table.per_fold.row(r) = per_fold.row(order[r]);
    table.rank.push_back(r + 1);
  }
  const int n_top = std::min(config.n_top, p);
  table.top.assign(table.feature.begin(), table.feature.begin() + n_top);
  return table;
}

}  // namespace phenotyper
