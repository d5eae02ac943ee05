#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phenotyper/cohort.hpp"
#include "phenotyper/dataset.hpp"
#include "phenotyper/feature_rank.hpp"
#include "phenotyper/gmm.hpp"
#include "phenotyper/lgmm.hpp"
#include "phenotyper/metrics.hpp"
#include "phenotyper/tsne.hpp"

namespace phenotyper {

struct PreprocessOptions {
  int impute_k = 5;
  double outlier_alpha = 0.001;
  std::vector<std::string> quadratic;
};

struct ResampleOptions {
  int smote_percent = 100;
  SmoteClasses smote_classes = SmoteClasses::Minority;
  int smote_k = 5;
};

struct RankOptions {
  int n_top = 20;
  int folds = 5;
  int n_trees = 100;
};

struct ClusterOptions {
  int k = 2;  // 0 selects by BIC over [k_min, k_max]
  int k_min = 1;
  int k_max = 6;
  int restarts = 10;
};

struct EvaluateOptions {
  int folds = 5;
  double threshold = 0.5;
  std::vector<int> subgroups = {1, 3};
  int subgroup_smote_percent = 500;
  int subgroup_n_top = 10;
};

struct PipelineConfig {
  std::filesystem::path cohort_csv;
  std::filesystem::path schema_json;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  PreprocessOptions preprocess;
  ResampleOptions resample;
  RankOptions rank;
  LgmmConfig model;
  TsneConfig tsne;
  ClusterOptions cluster;
  EvaluateOptions evaluate;
};

// Strict parse: unknown keys are rejected.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string fnv64; // content hash, hex
};

struct StageRecord {
  std::string stage;
  std::vector<ArtifactRecord> inputs;
  std::vector<ArtifactRecord> outputs;
  double duration_ms = 0.0;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
  std::string failed_stage;  // empty on success
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
std::string hash_file_hex(const std::filesystem::path& path);

// Working state threaded through the stages; standalone CLI subcommands
// populate only what their stage needs.
struct PipelineContext {
  PipelineConfig cfg;
  Cohort cohort;
  Dataset data;
  ImportanceTable importance;
  std::vector<std::string> top_features;
  LgmmFit lgmm;
  Embedding embedding;
  std::vector<RowKey> embed_keys;
  GmmModel gmm;
  ClusterAssignment assignment;
  std::map<std::string, int> groups;
};

// Each stage writes its artifacts under cfg.out_dir and returns their paths.
std::vector<std::string> stage_preprocess(PipelineContext& ctx);
std::vector<std::string> stage_rank(PipelineContext& ctx);
std::vector<std::string> stage_fit(PipelineContext& ctx);
std::vector<std::string> stage_embed(PipelineContext& ctx);
std::vector<std::string> stage_cluster(PipelineContext& ctx);
std::vector<std::string> stage_phenotype_analysis(PipelineContext& ctx);
std::vector<std::string> stage_metrics(PipelineContext& ctx);

// preprocess -> rank -> fit -> embed -> cluster -> phenotype_analysis ->
// metrics, with per-stage timing and hashing. A failing stage raises
// StageFailed after the manifest (with completed stages) is written;
// partial outputs are kept.
Manifest run_pipeline(const PipelineConfig& config);

}  // namespace phenotyper
