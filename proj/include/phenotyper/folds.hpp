#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "phenotyper/dataset.hpp"

namespace phenotyper {

// Subject-level fold assignment. All of a subject's visits land in one fold
// so random-intercept information cannot leak across the split. Stratified
// by any-visit outcome: within each stratum subjects are shuffled and dealt
// round-robin, keeping per-fold class counts within one subject of even.
struct FoldSplit {
  std::vector<std::string> subjects;
  std::vector<int> fold_of_subject;
  int n_folds = 0;

  int fold_of(const std::string& subject_id) const;
};

FoldSplit stratified_subject_folds(const std::vector<RowKey>& keys, int n_folds,
                                   std::uint64_t seed);

}  // namespace phenotyper
