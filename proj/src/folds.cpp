#include "phenotyper/folds.hpp"

#include <algorithm>

#include "phenotyper/errors.hpp"
#include "phenotyper/rng.hpp"

namespace phenotyper {

int FoldSplit::fold_of(const std::string& subject_id) const {
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (subjects[i] == subject_id) return fold_of_subject[i];
  return -1;
}

FoldSplit stratified_subject_folds(const std::vector<RowKey>& keys, int n_folds,
                                   std::uint64_t seed) {
  if (n_folds < 2) throw ValidationError("folds: need at least 2 folds");
  std::map<std::string, int> any_outcome;
  for (const auto& k : keys) {
    if (k.synthetic) continue;
    auto [it, _] = any_outcome.try_emplace(k.subject_id, 0);
    it->second |= k.outcome;
  }
  std::vector<std::string> positives, negatives;
  for (const auto& [sid, y] : any_outcome) (y ? positives : negatives).push_back(sid);
  for (const auto* stratum : {&positives, &negatives})
    if (static_cast<int>(stratum->size()) < n_folds && !stratum->empty())
      throw TooFewSubjects("folds: a class stratum has fewer subjects than folds");

  Rng rng = Rng(seed).child("folds");
  FoldSplit split;
  split.n_folds = n_folds;
  int offset = 0;
  for (auto* stratum : {&negatives, &positives}) {
    // Fisher-Yates, then deal round-robin with a rotating start.
    for (std::size_t i = stratum->size(); i > 1; --i)
      std::swap((*stratum)[i - 1], (*stratum)[rng.uniform_int(i)]);
    for (std::size_t i = 0; i < stratum->size(); ++i) {
      split.subjects.push_back((*stratum)[i]);
      split.fold_of_subject.push_back(static_cast<int>((i + offset) % n_folds));
    }
    offset += static_cast<int>(stratum->size());
  }
  return split;
}

}  // namespace phenotyper
