#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "phenotyper/dataset.hpp"
#include "phenotyper/preprocess.hpp"

namespace phenotyper {

// 1 - sum (n_c / n)^2 over class counts.
double gini_impurity(const std::vector<long>& class_counts);

struct ForestConfig {
  int n_trees = 100;
  int max_depth = -1;  // unbounded
  int mtry = 0;        // 0 -> ceil(sqrt(p))
  int min_leaf = 1;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int prediction = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<bool> in_bag;
};

struct Forest {
  std::vector<Tree> trees;
  Eigen::VectorXd importances;  // normalized mean decrease in Gini, sums to 1
  ForestConfig config;
  int n_features = 0;
};

// CART trees on bootstrap samples; splits maximize the weighted Gini
// decrease over mtry random candidates, tie-broken by lowest feature index
// then lowest threshold, so identical seeds give identical forests.
Forest fit_random_forest(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         const ForestConfig& config);

int tree_predict(const Tree& tree, const Eigen::RowVectorXd& x);
std::vector<int> forest_predict(const Forest& forest, const Eigen::MatrixXd& X);

// Majority vote over trees whose bootstrap excluded the row; rows in every
// bag fall back to the full-forest vote.
std::vector<int> oob_predict(const Forest& forest, const Eigen::MatrixXd& X);

struct RankConfig {
  ForestConfig forest;
  int n_top = 20;
  int folds = 5;
  int smote_percent = 100;
  SmoteClasses smote_classes = SmoteClasses::Minority;
  int smote_k = 5;
  std::uint64_t seed = 0;
};

struct ImportanceTable {
  std::vector<std::string> feature;   // all features, ranked order
  std::vector<double> mean_importance;
  Eigen::MatrixXd per_fold;           // ranked feature x fold
  std::vector<int> rank;              // 1-based, aligned with feature
  std::vector<std::string> top;       // first n_top names
};

// Per fold: SMOTE the training rows, fit a forest, record its normalized
// importances; features are ranked by the cross-fold mean.
ImportanceTable rank_features(const Dataset& data, const RankConfig& config);

}  // namespace phenotyper
