#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "phenotyper/cohort.hpp"

namespace phenotyper {

// Generative parameters for one feature. Continuous draws are
// Normal(mean, sd); binary draws are Bernoulli(prob); categorical draws pick
// a level with the given probabilities (aligned with spec.levels).
struct FeatureGen {
  FeatureSpec spec;
  double mean = 0.0;
  double sd = 1.0;
  double prob = 0.5;
  std::vector<double> level_probs;
};

struct SynthConfig {
  int n_subjects = 0;
  int n_visits = 3;
  std::vector<FeatureGen> features;
  std::vector<double> true_beta;  // intercept first, then one slope per feature
  double sigma_mu = 0.0;
  double missing_rate = 0.0;
  std::optional<std::vector<int>> group_targets;  // counts per group 0..7
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruthRow {
  std::string subject_id;
  int visit;
  double true_p;
};

struct GroundTruth {
  std::vector<double> beta;
  double sigma_mu = 0.0;
  std::vector<std::pair<std::string, double>> mu;  // per subject
  std::vector<GroundTruthRow> rows;
  long rejection_draws = 0;  // subjects drawn, accepted or not
};

struct SynthResult {
  Cohort cohort;
  GroundTruth truth;
};

// Draws outcomes forward through the random-intercept logistic model: each
// subject gets mu ~ N(0, sigma_mu^2), each visit draws features per spec and
// an outcome Bernoulli(logistic(beta0 + mu + sum beta_k x_k)), where x_k is
// the numeric encoding downstream models see (categoricals use their
// lexicographic level code). With group_targets set, whole subjects are
// rejection-sampled until the Table-1 group histogram matches exactly;
// the attempt budget is 10,000 * n_subjects draws.
SynthResult generate_cohort(const SynthConfig& config);

SynthConfig load_synth_config(const std::filesystem::path& path);
void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);

}  // namespace phenotyper
