#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "phenotyper/cohort.hpp"
#include "phenotyper/preprocess.hpp"

namespace phenotyper {

// Row identity carried alongside model matrices. Synthetic rows come from
// SMOTE and are barred from evaluation sets.
struct RowKey {
  std::string subject_id;
  int visit = 0;
  int outcome = 0;
  bool synthetic = false;
};

// Complete (encoded, imputed) model-ready table aligned with cohort rows.
struct Dataset {
  Eigen::MatrixXd X;
  std::vector<ColumnInfo> columns;
  std::vector<RowKey> keys;
  Codebook codebook;

  int column_index(const std::string& name) const;
  Eigen::MatrixXd select(const std::vector<std::string>& names) const;
  std::vector<int> labels() const;  // per-row outcome
};

Dataset make_dataset(const Cohort& cohort, int impute_k = 5);

}  // namespace phenotyper
