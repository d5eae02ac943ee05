#include "phenotyper/dataset.hpp"

#include "phenotyper/errors.hpp"

namespace phenotyper {

int Dataset::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].name == name) return static_cast<int>(j);
  return -1;
}

Eigen::MatrixXd Dataset::select(const std::vector<std::string>& names) const {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) {
    const int j = column_index(names[c]);
    if (j < 0) throw ValidationError("dataset has no column '" + names[c] + "'");
    out.col(static_cast<Eigen::Index>(c)) = X.col(j);
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> y;
  y.reserve(keys.size());
  for (const auto& k : keys) y.push_back(k.outcome);
  return y;
}

Dataset make_dataset(const Cohort& cohort, int impute_k) {
  auto [encoded, codebook] = encode_categoricals(cohort);
  Dataset ds;
  ds.columns = encoded.columns;
  ds.codebook = std::move(codebook);
  if (encoded.missing.any()) {
    ds.X = impute_knn(encoded, impute_k).values;
  } else {
    ds.X = std::move(encoded.values);
  }
  ds.keys.reserve(cohort.rows.size());
  for (const auto& r : cohort.rows) ds.keys.push_back({r.subject_id, r.visit, r.outcome, false});
  return ds;
}

}  // namespace phenotyper
