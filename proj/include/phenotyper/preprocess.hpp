#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "phenotyper/cohort.hpp"

namespace phenotyper {

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Label-to-code map per categorical feature; codes are 0..L-1 in
// lexicographic label order.
struct Codebook {
  std::map<std::string, std::vector<std::string>> levels;

  int encode(const std::string& feature, const std::string& label) const;
  const std::string& decode(const std::string& feature, int code) const;
};

struct ColumnInfo {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  int n_levels = 0;  // categorical only
};

struct EncodedMatrix {
  Eigen::MatrixXd values;
  BoolGrid missing;
  std::vector<ColumnInfo> columns;

  int column_index(const std::string& name) const;
};

std::pair<EncodedMatrix, Codebook> encode_categoricals(const Cohort& cohort);

struct ImputeResult {
  Eigen::MatrixXd values;
  // Cells filled from the column mean/mode because no donor shared an
  // observed column with the row.
  std::vector<std::pair<int, int>> fallback_cells;
};

// Fills each missing cell from the k rows nearest in Euclidean distance over
// standardized columns observed in both rows; continuous cells take the donor
// mean, categorical the donor mode (smallest code on ties).
ImputeResult impute_knn(const EncodedMatrix& m, int k);

struct OutlierReport {
  Eigen::VectorXd d2;  // squared Mahalanobis distance per row
  double threshold = 0.0;
  double alpha = 0.0;
  int dof = 0;
  std::vector<bool> flags;
};

OutlierReport mahalanobis_outliers(const Eigen::MatrixXd& m, double alpha);

enum class SmoteClasses { Minority, Both };

struct SmoteResult {
  Eigen::MatrixXd values;
  std::vector<int> labels;
  std::vector<bool> synthetic;  // per output row
  std::vector<int> parent;      // parent row index, -1 for originals
  bool k_clamped = false;
};

// percent must be a positive multiple of 100; each 100% adds one synthetic
// per target-class sample, interpolated toward one of its k nearest
// same-class neighbours with a single lambda ~ U[0,1]. Originals keep their
// order; synthetics are appended.
SmoteResult smote_oversample(const Eigen::MatrixXd& m, const std::vector<int>& labels,
                             int percent, int k, std::uint64_t seed, SmoteClasses which,
                             const std::vector<ColumnInfo>& columns);

// One synthetic point; categorical cells copy the parent.
Eigen::RowVectorXd smote_interpolate(const Eigen::RowVectorXd& parent,
                                     const Eigen::RowVectorXd& neighbor, double lambda,
                                     const std::vector<ColumnInfo>& columns);

// Appends squared copies of the named continuous columns as "<name>^2".
EncodedMatrix augment_quadratic(const EncodedMatrix& m, const std::vector<std::string>& names);

}  // namespace phenotyper
