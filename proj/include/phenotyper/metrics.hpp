#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phenotyper/dataset.hpp"
#include "phenotyper/folds.hpp"
#include "phenotyper/lgmm.hpp"

namespace phenotyper {

struct ConfusionCounts {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  long total() const { return tp + tn + fp + fn; }
};

// Zero-denominator metrics stay unset rather than being coerced to 0/0.
struct MetricsReport {
  ConfusionCounts counts;
  std::optional<double> acc, pre, spec, npv, recall;
  std::string stratum;
};

MetricsReport metrics_from_counts(const ConfusionCounts& counts, std::string stratum = "");
MetricsReport confusion_metrics(const std::vector<int>& predictions,
                                const std::vector<int>& labels);

struct PredRecord {
  std::string subject_id;
  int visit = 0;
  double prob = 0.0;
  int predicted = 0;
  int truth = 0;
};

struct CvConfig {
  int folds = 5;
  int smote_percent = 100;
  SmoteClasses smote_classes = SmoteClasses::Minority;
  int smote_k = 5;
  LgmmConfig lgmm;
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

enum class CvModel { Lgmm, LrPerVisit };

struct CvOutcome {
  std::vector<MetricsReport> per_fold;
  MetricsReport pooled;  // confusion counts pooled over out-of-fold predictions
  std::vector<PredRecord> oof;
  FoldSplit folds;
};

// Subject-level stratified cross-validation. SMOTE runs on training folds
// only; synthetic rows get fresh singleton subject ids and never reach an
// evaluation set. Out-of-fold predictions use the population curve (new
// subjects have no estimated intercept).
CvOutcome cross_validate(const Dataset& data, const std::vector<std::string>& features,
                         CvModel model, const CvConfig& config,
                         const FoldSplit* shared_folds = nullptr);

std::vector<MetricsReport> metrics_by_visit(const std::vector<PredRecord>& preds, int n_visits);
std::vector<MetricsReport> metrics_by_group(const std::vector<PredRecord>& preds,
                                            const std::map<std::string, int>& groups);

// Per-group models in the subgroup recipe: SMOTE both classes by 500%, rank
// the top 10 features within the group, then cross-validate.
struct GroupEvalResult {
  int group = 0;
  CvOutcome cv;
  std::vector<std::string> features;
};
std::vector<GroupEvalResult> evaluate_groups(const Dataset& data,
                                             const std::map<std::string, int>& subject_groups,
                                             const std::vector<int>& which_groups,
                                             const CvConfig& cv_config, int n_top = 10,
                                             int forest_trees = 100);

}  // namespace phenotyper
