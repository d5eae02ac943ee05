// cohort-phenotyper: longitudinal cohort phenotyping pipeline CLI.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "phenotyper/csv.hpp"
#include "phenotyper/errors.hpp"
#include "phenotyper/pipeline.hpp"
#include "phenotyper/synth.hpp"

namespace fs = std::filesystem;
using namespace phenotyper;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void apply_overrides(PipelineConfig& cfg, const CommonArgs& args) {
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out.empty()) cfg.out_dir = args.out;
  fs::create_directories(cfg.out_dir);
}

int run_synth(const CommonArgs& args) {
  SynthConfig cfg = load_synth_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  fs::create_directories(args.out);
  const SynthResult result = generate_cohort(cfg);
  save_cohort(result.cohort, fs::path(args.out) / "cohort.csv",
              fs::path(args.out) / "schema.json");
  write_ground_truth(result.truth, fs::path(args.out) / "ground_truth.json");
  std::cout << "wrote cohort.csv, schema.json, ground_truth.json to " << args.out << "\n";
  return 0;
}

PipelineContext make_context(const CommonArgs& args) {
  PipelineContext ctx;
  ctx.cfg = load_pipeline_config(args.config);
  apply_overrides(ctx.cfg, args);
  return ctx;
}

void echo_outputs(const std::vector<std::string>& files, const fs::path& out) {
  for (const auto& f : files) std::cout << "wrote " << (out / f).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal cohort phenotyping: preprocessing, tree-based feature ranking, "
               "random-intercept logistic modeling, t-SNE + GMM phenotype clustering, and a "
               "cross-validated evaluation harness."};
  app.require_subcommand(1);

  CommonArgs args;
  // Flags shared by every subcommand.
  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    sub->add_option("--config", args.config, "JSON config file")->required(config_required);
    sub->add_option("--seed", args.seed, "Seed override");
    sub->add_option("--out", args.out, "Output directory");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort with ground truth");
  add_common(synth);

  auto* preprocess = app.add_subcommand(
      "preprocess", "Encode, impute, and screen outliers; writes the model-ready table");
  add_common(preprocess);
  int smote_percent = -1;
  std::string smote_classes;
  int impute_k = -1;
  double outlier_alpha = -1.0;
  std::string quadratic;
  preprocess->add_option("--impute-k", impute_k, "KNN imputation neighbours");
  preprocess->add_option("--outlier-alpha", outlier_alpha, "Mahalanobis tail probability");
  preprocess->add_option("--smote-percent", smote_percent,
                         "Materialize SMOTE output at this percent (multiple of 100)");
  preprocess->add_option("--smote-classes", smote_classes, "minority|both");
  preprocess->add_option("--quadratic", quadratic, "Comma-separated features to square");

  auto* rank = app.add_subcommand("rank", "Cross-validated random-forest feature ranking");
  add_common(rank);
  auto* fit = app.add_subcommand("fit", "Fit the mixed model (or per-visit logistic baseline)");
  add_common(fit);
  std::string fit_model = "lgmm";
  int fit_visit = 0;
  fit->add_option("--model", fit_model, "lgmm|lr");
  fit->add_option("--visit", fit_visit, "Visit for --model lr (default: every visit)");

  auto* embed = app.add_subcommand("embed", "t-SNE embedding of the ranked features");
  add_common(embed);
  auto* cluster = app.add_subcommand("cluster", "GMM clustering plus KLD/comparison/trajectory");
  add_common(cluster);
  auto* report = app.add_subcommand("report", "Cross-validated metrics and model comparison");
  add_common(report);
  auto* run = app.add_subcommand("run", "Full pipeline with manifest");
  add_common(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(args);

    if (run->parsed()) {
      PipelineConfig cfg = load_pipeline_config(args.config);
      apply_overrides(cfg, args);
      const Manifest manifest = run_pipeline(cfg);
      std::cout << "pipeline complete: " << manifest.stages.size() << " stages, manifest at "
                << (cfg.out_dir / "manifest.json").string() << "\n";
      return 0;
    }

    PipelineContext ctx = make_context(args);
    if (preprocess->parsed()) {
      if (impute_k > 0) ctx.cfg.preprocess.impute_k = impute_k;
      if (outlier_alpha > 0.0) ctx.cfg.preprocess.outlier_alpha = outlier_alpha;
      if (!quadratic.empty()) {
        ctx.cfg.preprocess.quadratic.clear();
        std::string token;
        for (char c : quadratic + ",") {
          if (c == ',') {
            if (!token.empty()) ctx.cfg.preprocess.quadratic.push_back(token);
            token.clear();
          } else {
            token += c;
          }
        }
      }
      auto files = stage_preprocess(ctx);

      // Optionally materialize a SMOTE-augmented copy of the table.
      if (smote_percent > 0) {
        SmoteClasses cls = ctx.cfg.resample.smote_classes;
        if (!smote_classes.empty())
          cls = smote_classes == "both" ? SmoteClasses::Both : SmoteClasses::Minority;
        std::vector<int> labels;
        for (const auto& k : ctx.data.keys) labels.push_back(k.outcome);
        const SmoteResult sm =
            smote_oversample(ctx.data.X, labels, smote_percent, ctx.cfg.resample.smote_k,
                             ctx.cfg.seed, cls, ctx.data.columns);
        CsvTable csv;
        csv.header = {"row", "synthetic"};
        for (const auto& c : ctx.data.columns) csv.header.push_back(c.name);
        csv.header.push_back("outcome");
        for (Eigen::Index i = 0; i < sm.values.rows(); ++i) {
          std::vector<std::string> row{std::to_string(i),
                                       sm.synthetic[static_cast<std::size_t>(i)] ? "1" : "0"};
          for (Eigen::Index j = 0; j < sm.values.cols(); ++j)
            row.push_back(format_double(sm.values(i, j)));
          row.push_back(std::to_string(sm.labels[static_cast<std::size_t>(i)]));
          csv.rows.push_back(std::move(row));
        }
        write_csv(ctx.cfg.out_dir / "smote_augmented.csv", csv);
        files.push_back("smote_augmented.csv");
      }
      echo_outputs(files, ctx.cfg.out_dir);
      return 0;
    }

    if (rank->parsed()) {
      stage_preprocess(ctx);
      echo_outputs(stage_rank(ctx), ctx.cfg.out_dir);
      return 0;
    }
    if (fit->parsed()) {
      stage_preprocess(ctx);
      stage_rank(ctx);
      if (fit_model == "lgmm") {
        const LgmmDesign design = LgmmDesign::build(ctx.data, ctx.top_features);
        ctx.lgmm = lgmm_fit(design, ctx.cfg.model);
        std::vector<std::string> files = stage_fit(ctx);
        echo_outputs(files, ctx.cfg.out_dir);
      } else if (fit_model == "lr") {
        echo_outputs(stage_fit(ctx), ctx.cfg.out_dir);
      } else {
        throw ValidationError("--model must be lgmm or lr");
      }
      return 0;
    }
    if (embed->parsed()) {
      stage_preprocess(ctx);
      stage_rank(ctx);
      echo_outputs(stage_embed(ctx), ctx.cfg.out_dir);
      return 0;
    }
    if (cluster->parsed()) {
      stage_preprocess(ctx);
      stage_rank(ctx);
      stage_embed(ctx);
      auto files = stage_cluster(ctx);
      auto more = stage_phenotype_analysis(ctx);
      files.insert(files.end(), more.begin(), more.end());
      echo_outputs(files, ctx.cfg.out_dir);
      return 0;
    }
    if (report->parsed()) {
      stage_preprocess(ctx);
      stage_rank(ctx);
      echo_outputs(stage_metrics(ctx), ctx.cfg.out_dir);
      return 0;
    }
  } catch (const StageFailed& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
