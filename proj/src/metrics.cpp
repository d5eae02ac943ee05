#include "phenotyper/metrics.hpp"

#include <algorithm>
#include <set>

#include "phenotyper/errors.hpp"
#include "phenotyper/feature_rank.hpp"
#include "phenotyper/rng.hpp"

namespace phenotyper {

MetricsReport metrics_from_counts(const ConfusionCounts& counts, std::string stratum) {
  MetricsReport r;
  r.counts = counts;
  r.stratum = std::move(stratum);
  const auto ratio = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.acc = ratio(counts.tp + counts.tn, counts.total());
  r.pre = ratio(counts.tp, counts.tp + counts.fp);
  r.spec = ratio(counts.tn, counts.tn + counts.fp);
  r.npv = ratio(counts.tn, counts.tn + counts.fn);
  r.recall = ratio(counts.tp, counts.tp + counts.fn);
  return r;
}

MetricsReport confusion_metrics(const std::vector<int>& predictions,
                                const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw LengthMismatch("confusion_metrics: prediction/label length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == 1) {
      (labels[i] == 1 ? c.tp : c.fp)++;
    } else {
      (labels[i] == 0 ? c.tn : c.fn)++;
    }
  }
  return metrics_from_counts(c);
}

namespace {

std::vector<ColumnInfo> selected_column_info(const Dataset& data,
                                             const std::vector<std::string>& features) {
  std::vector<ColumnInfo> cols;
  for (const auto& name : features) {
    const int j = data.column_index(name);
    if (j < 0) throw ValidationError("cross_validate: no column '" + name + "'");
    cols.push_back(data.columns[static_cast<std::size_t>(j)]);
  }
  return cols;
}

struct TrainingSet {
  Eigen::MatrixXd X;
  std::vector<RowKey> keys;
};

// SMOTE on the training rows; synthetic rows become singleton subjects
// carrying the parent's visit so visit-aware models can still use them.
TrainingSet smote_training(const Eigen::MatrixXd& X, const std::vector<RowKey>& keys,
                           int percent, SmoteClasses classes, int k, std::uint64_t seed,
                           const std::vector<ColumnInfo>& cols) {
  TrainingSet out;
  if (percent <= 0) {
    out.X = X;
    out.keys = keys;
    return out;
  }
  std::vector<int> labels;
  labels.reserve(keys.size());
  for (const auto& key : keys) labels.push_back(key.outcome);
  const SmoteResult sm = smote_oversample(X, labels, percent, k, seed, classes, cols);
  out.X = sm.values;
  out.keys = keys;
  for (std::size_t i = keys.size(); i < sm.labels.size(); ++i) {
    const RowKey& parent = keys[static_cast<std::size_t>(sm.parent[i])];
    out.keys.push_back({"smote:" + std::to_string(i - keys.size()), parent.visit, sm.labels[i],
                        true});
  }
  return out;
}

ConfusionCounts count_records(const std::vector<PredRecord>& records) {
  ConfusionCounts c;
  for (const auto& r : records) {
    if (r.predicted == 1) {
      (r.truth == 1 ? c.tp : c.fp)++;
    } else {
      (r.truth == 0 ? c.tn : c.fn)++;
    }
  }
  return c;
}

}  // namespace

CvOutcome cross_validate(const Dataset& data, const std::vector<std::string>& features,
                         CvModel model, const CvConfig& config,
                         const FoldSplit* shared_folds) {
  for (const auto& key : data.keys)
    if (key.synthetic)
      throw ValidationError("cross_validate: dataset must contain only real rows");

  const Eigen::MatrixXd X = data.select(features);
  const std::vector<ColumnInfo> cols = selected_column_info(data, features);
  CvOutcome out;
  out.folds = shared_folds ? *shared_folds
                           : stratified_subject_folds(data.keys, config.folds, config.seed);

  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < out.folds.subjects.size(); ++i)
    fold_of[out.folds.subjects[i]] = out.folds.fold_of_subject[i];

  for (int f = 0; f < out.folds.n_folds; ++f) {
    std::vector<int> train_rows, eval_rows;
    for (std::size_t i = 0; i < data.keys.size(); ++i) {
      const auto it = fold_of.find(data.keys[i].subject_id);
      if (it == fold_of.end())
        throw ValidationError("cross_validate: subject missing from fold split");
      (it->second == f ? eval_rows : train_rows).push_back(static_cast<int>(i));
    }

    auto slice = [&](const std::vector<int>& rows) {
      TrainingSet s;
      s.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        s.X.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
        s.keys.push_back(data.keys[static_cast<std::size_t>(rows[i])]);
      }
      return s;
    };
    const TrainingSet train_raw = slice(train_rows);
    const TrainingSet eval = slice(eval_rows);

    std::vector<PredRecord> fold_preds;
    const std::uint64_t fold_seed = Rng(config.seed).child("cv-smote").child(f).next_u64();

    if (model == CvModel::Lgmm) {
      const TrainingSet train = smote_training(train_raw.X, train_raw.keys, config.smote_percent,
                                               config.smote_classes, config.smote_k, fold_seed,
                                               cols);
      const LgmmDesign design = LgmmDesign::build_rows(train.X, train.keys, features);
      const LgmmFit fit = lgmm_fit(design, config.lgmm);
      const LgmmDesign eval_design = LgmmDesign::build_rows(eval.X, eval.keys, features);
      const PredictResult pred = lgmm_predict(fit, eval_design, PredictMode::Population);
      Eigen::Index at = 0;
      for (const auto& block : eval_design.subjects) {
        for (Eigen::Index r = 0; r < block.y.size(); ++r, ++at) {
          fold_preds.push_back({block.subject_id, block.visits[static_cast<std::size_t>(r)],
                                pred.prob[at], pred.prob[at] >= config.threshold ? 1 : 0,
                                static_cast<int>(block.y[r])});
        }
      }
    } else {
      std::set<int> visits;
      for (const auto& key : eval.keys) visits.insert(key.visit);
      for (int v : visits) {
        std::vector<int> tr, ev;
        for (std::size_t i = 0; i < train_raw.keys.size(); ++i)
          if (train_raw.keys[i].visit == v) tr.push_back(static_cast<int>(i));
        for (std::size_t i = 0; i < eval.keys.size(); ++i)
          if (eval.keys[i].visit == v) ev.push_back(static_cast<int>(i));
        if (tr.empty() || ev.empty()) continue;

        TrainingSet tr_v;
        tr_v.X.resize(static_cast<Eigen::Index>(tr.size()), X.cols());
        for (std::size_t i = 0; i < tr.size(); ++i) {
          tr_v.X.row(static_cast<Eigen::Index>(i)) = train_raw.X.row(tr[i]);
          tr_v.keys.push_back(train_raw.keys[static_cast<std::size_t>(tr[i])]);
        }
        const TrainingSet train =
            smote_training(tr_v.X, tr_v.keys, config.smote_percent, config.smote_classes,
                           config.smote_k, Rng(fold_seed).child(v).next_u64(), cols);
        const LgmmDesign design = LgmmDesign::build_rows(train.X, train.keys, features);
        const LgmmFit fit = lr_fit(design, config.lgmm);

        TrainingSet ev_v;
        ev_v.X.resize(static_cast<Eigen::Index>(ev.size()), X.cols());
        for (std::size_t i = 0; i < ev.size(); ++i) {
          ev_v.X.row(static_cast<Eigen::Index>(i)) = eval.X.row(ev[i]);
          ev_v.keys.push_back(eval.keys[static_cast<std::size_t>(ev[i])]);
        }
        const LgmmDesign eval_design = LgmmDesign::build_rows(ev_v.X, ev_v.keys, features);
        const PredictResult pred = lgmm_predict(fit, eval_design, PredictMode::Population);
        Eigen::Index at = 0;
        for (const auto& block : eval_design.subjects) {
          for (Eigen::Index r = 0; r < block.y.size(); ++r, ++at) {
            fold_preds.push_back({block.subject_id, block.visits[static_cast<std::size_t>(r)],
                                  pred.prob[at], pred.prob[at] >= config.threshold ? 1 : 0,
                                  static_cast<int>(block.y[r])});
          }
        }
      }
    }

    out.per_fold.push_back(
        metrics_from_counts(count_records(fold_preds), "fold " + std::to_string(f + 1)));
    out.oof.insert(out.oof.end(), fold_preds.begin(), fold_preds.end());
  }
  out.pooled = metrics_from_counts(count_records(out.oof), "pooled");
  return out;
}

std::vector<MetricsReport> metrics_by_visit(const std::vector<PredRecord>& preds, int n_visits) {
  std::vector<MetricsReport> out;
  for (int v = 1; v <= n_visits; ++v) {
    std::vector<PredRecord> sub;
    for (const auto& p : preds)
      if (p.visit == v) sub.push_back(p);
    ConfusionCounts c;
    for (const auto& p : sub) {
      if (p.predicted == 1) {
        (p.truth == 1 ? c.tp : c.fp)++;
      } else {
        (p.truth == 0 ? c.tn : c.fn)++;
      }
    }
    out.push_back(metrics_from_counts(c, "visit " + std::to_string(v)));
  }
  return out;
}

std::vector<MetricsReport> metrics_by_group(const std::vector<PredRecord>& preds,
                                            const std::map<std::string, int>& groups) {
  std::map<int, ConfusionCounts> counts;
  for (const auto& p : preds) {
    const auto it = groups.find(p.subject_id);
    const int g = it == groups.end() ? -1 : it->second;  // -1: no complete triple
    auto& c = counts[g];
    if (p.predicted == 1) {
      (p.truth == 1 ? c.tp : c.fp)++;
    } else {
      (p.truth == 0 ? c.tn : c.fn)++;
    }
  }
  std::vector<MetricsReport> out;
  for (const auto& [g, c] : counts)
    out.push_back(metrics_from_counts(c, g < 0 ? "ungrouped" : "group " + std::to_string(g)));
  return out;
}

std::vector<GroupEvalResult> evaluate_groups(const Dataset& data,
                                             const std::map<std::string, int>& subject_groups,
                                             const std::vector<int>& which_groups,
                                             const CvConfig& cv_config, int n_top,
                                             int forest_trees) {
  std::vector<GroupEvalResult> out;
  for (int g : which_groups) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < data.keys.size(); ++i) {
      const auto it = subject_groups.find(data.keys[i].subject_id);
      if (it != subject_groups.end() && it->second == g) rows.push_back(static_cast<int>(i));
    }
    if (rows.empty()) throw EmptyStratum("evaluate_groups: group " + std::to_string(g) +
                                         " has no rows");
    Dataset sub;
    sub.columns = data.columns;
    sub.codebook = data.codebook;
    sub.X.resize(static_cast<Eigen::Index>(rows.size()), data.X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      sub.X.row(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]);
      sub.keys.push_back(data.keys[static_cast<std::size_t>(rows[i])]);
    }

    RankConfig rank_cfg;
    rank_cfg.forest.n_trees = forest_trees;
    rank_cfg.n_top = n_top;
    rank_cfg.folds = cv_config.folds;
    rank_cfg.smote_percent = cv_config.smote_percent;
    rank_cfg.smote_classes = cv_config.smote_classes;
    rank_cfg.smote_k = cv_config.smote_k;
    rank_cfg.seed = Rng(cv_config.seed).child("group-rank").child(g).next_u64();
    const ImportanceTable table = rank_features(sub, rank_cfg);

    GroupEvalResult res;
    res.group = g;
    res.features = table.top;
    CvConfig cv = cv_config;
    cv.seed = Rng(cv_config.seed).child("group-cv").child(g).next_u64();
    res.cv = cross_validate(sub, res.features, CvModel::Lgmm, cv);
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace phenotyper
