#include "phenotyper/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "phenotyper/csv.hpp"
#include "phenotyper/divergence.hpp"
#include "phenotyper/errors.hpp"
#include "phenotyper/hypothesis.hpp"
#include "phenotyper/preprocess.hpp"
#include "phenotyper/rng.hpp"
#include "phenotyper/svg.hpp"
#include "phenotyper/trajectory.hpp"

namespace phenotyper {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.count(key))
      throw ValidationError("config: unknown key '" + key + "' in " + where);
}

SmoteClasses smote_classes_from(const std::string& s) {
  if (s == "minority") return SmoteClasses::Minority;
  if (s == "both") return SmoteClasses::Both;
  throw ValidationError("config: smote_classes must be 'minority' or 'both'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  open_out(path) << j.dump(2) << "\n";
}

std::string metric_str(const std::optional<double>& m) {
  return m ? format_double(*m) : "";
}

void append_metrics_row(CsvTable& csv, const std::string& model, const MetricsReport& r) {
  csv.rows.push_back({model, r.stratum, std::to_string(r.counts.tp), std::to_string(r.counts.tn),
                      std::to_string(r.counts.fp), std::to_string(r.counts.fn),
                      metric_str(r.acc), metric_str(r.pre), metric_str(r.spec),
                      metric_str(r.npv), metric_str(r.recall)});
}

CsvTable metrics_csv_header() {
  CsvTable csv;
  csv.header = {"model", "stratum", "tp", "tn", "fp", "fn",
                "accuracy", "precision", "specificity", "npv", "recall"};
  return csv;
}

void write_wald_csv(const fs::path& path, const std::vector<WaldRow>& rows) {
  CsvTable csv;
  csv.header = {"variable", "estimate", "se", "ci_upper", "ci_lower", "p_value", "sig_code"};
  for (const auto& r : rows)
    csv.rows.push_back({r.name, format_double(r.estimate), format_double(r.se),
                        format_double(r.ci_upper), format_double(r.ci_lower),
                        format_double(r.p), r.sig});
  write_csv(path, csv);
}

json fit_to_json(const LgmmFit& fit) {
  json j;
  j["terms"] = fit.term_names;
  j["beta"] = std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size());
  j["sigma_mu"] = fit.sigma_mu;
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["separation_warning"] = fit.separation_warning;
  j["quad_points"] = fit.quad_points;
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.cov_beta.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < fit.cov_beta.cols(); ++c) row.push_back(fit.cov_beta(r, c));
    cov.push_back(std::move(row));
  }
  j["cov_beta"] = std::move(cov);
  json modes = json::object();
  for (std::size_t i = 0; i < fit.subject_ids.size(); ++i)
    modes[fit.subject_ids[i]] = fit.mu_modes[static_cast<Eigen::Index>(i)];
  j["mu_modes"] = std::move(modes);
  return j;
}

// The cluster pair reported on: the two heaviest components when K > 2.
std::pair<int, int> analysis_clusters(const GmmModel& gmm) {
  if (gmm.K < 2) return {0, -1};
  int a = 0, b = 1;
  for (int k = 1; k < gmm.K; ++k)
    if (gmm.weights[k] > gmm.weights[a]) a = k;
  b = a == 0 ? 1 : 0;
  for (int k = 0; k < gmm.K; ++k)
    if (k != a && gmm.weights[k] > gmm.weights[b]) b = k;
  if (a > b) std::swap(a, b);  // keep the stable left-to-right order
  return {a, b};
}

}  // namespace

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open pipeline config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("pipeline config parse error: " + std::string(e.what()));
  }

  reject_unknown(j, {"input", "seed", "out_dir", "preprocess", "resample", "rank", "model",
                     "tsne", "cluster", "evaluate"},
                 "top level");
  PipelineConfig cfg;
  const json& input = j.at("input");
  reject_unknown(input, {"cohort_csv", "schema"}, "input");
  cfg.cohort_csv = input.at("cohort_csv").get<std::string>();
  cfg.schema_json = input.at("schema").get<std::string>();
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

  if (j.contains("preprocess")) {
    const json& p = j["preprocess"];
    reject_unknown(p, {"impute_k", "outlier_alpha", "quadratic"}, "preprocess");
    cfg.preprocess.impute_k = p.value("impute_k", cfg.preprocess.impute_k);
    cfg.preprocess.outlier_alpha = p.value("outlier_alpha", cfg.preprocess.outlier_alpha);
    if (p.contains("quadratic"))
      cfg.preprocess.quadratic = p["quadratic"].get<std::vector<std::string>>();
  }
  if (j.contains("resample")) {
    const json& p = j["resample"];
    reject_unknown(p, {"smote_percent", "smote_classes", "smote_k"}, "resample");
    cfg.resample.smote_percent = p.value("smote_percent", cfg.resample.smote_percent);
    cfg.resample.smote_k = p.value("smote_k", cfg.resample.smote_k);
    if (p.contains("smote_classes"))
      cfg.resample.smote_classes = smote_classes_from(p["smote_classes"].get<std::string>());
  }
  if (j.contains("rank")) {
    const json& p = j["rank"];
    reject_unknown(p, {"n_top", "folds", "n_trees"}, "rank");
    cfg.rank.n_top = p.value("n_top", cfg.rank.n_top);
    cfg.rank.folds = p.value("folds", cfg.rank.folds);
    cfg.rank.n_trees = p.value("n_trees", cfg.rank.n_trees);
  }
  if (j.contains("model")) {
    const json& p = j["model"];
    reject_unknown(p, {"quad_points", "tol", "max_iter"}, "model");
    cfg.model.quad_points = p.value("quad_points", cfg.model.quad_points);
    cfg.model.tol = p.value("tol", cfg.model.tol);
    cfg.model.max_iter = p.value("max_iter", cfg.model.max_iter);
  }
  if (j.contains("tsne")) {
    const json& p = j["tsne"];
    reject_unknown(p,
                   {"perplexity", "early_exaggeration", "exaggeration_iters", "total_iters",
                    "learning_rate", "init"},
                   "tsne");
    cfg.tsne.perplexity = p.value("perplexity", cfg.tsne.perplexity);
    cfg.tsne.early_exaggeration = p.value("early_exaggeration", cfg.tsne.early_exaggeration);
    cfg.tsne.exaggeration_iters = p.value("exaggeration_iters", cfg.tsne.exaggeration_iters);
    cfg.tsne.total_iters = p.value("total_iters", cfg.tsne.total_iters);
    cfg.tsne.learning_rate = p.value("learning_rate", cfg.tsne.learning_rate);
    if (p.contains("init")) {
      const std::string init = p["init"].get<std::string>();
      if (init == "random") {
        cfg.tsne.init = TsneConfig::Init::RandomGaussian;
      } else if (init == "pca") {
        cfg.tsne.init = TsneConfig::Init::Pca;
      } else {
        throw ValidationError("config: tsne.init must be 'random' or 'pca'");
      }
    }
  }
  if (j.contains("cluster")) {
    const json& p = j["cluster"];
    reject_unknown(p, {"k", "k_min", "k_max", "restarts"}, "cluster");
    if (p.contains("k")) {
      if (p["k"].is_string()) {
        if (p["k"].get<std::string>() != "auto")
          throw ValidationError("config: cluster.k must be a count or 'auto'");
        cfg.cluster.k = 0;
      } else {
        cfg.cluster.k = p["k"].get<int>();
      }
    }
    cfg.cluster.k_min = p.value("k_min", cfg.cluster.k_min);
    cfg.cluster.k_max = p.value("k_max", cfg.cluster.k_max);
    cfg.cluster.restarts = p.value("restarts", cfg.cluster.restarts);
  }
  if (j.contains("evaluate")) {
    const json& p = j["evaluate"];
    reject_unknown(p,
                   {"folds", "threshold", "subgroups", "subgroup_smote_percent",
                    "subgroup_n_top"},
                   "evaluate");
    cfg.evaluate.folds = p.value("folds", cfg.evaluate.folds);
    cfg.evaluate.threshold = p.value("threshold", cfg.evaluate.threshold);
    if (p.contains("subgroups")) cfg.evaluate.subgroups = p["subgroups"].get<std::vector<int>>();
    cfg.evaluate.subgroup_smote_percent =
        p.value("subgroup_smote_percent", cfg.evaluate.subgroup_smote_percent);
    cfg.evaluate.subgroup_n_top = p.value("subgroup_n_top", cfg.evaluate.subgroup_n_top);
  }
  return cfg;
}

std::string hash_file_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot hash missing file " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  json j;
  j["seed"] = manifest.seed;
  if (!manifest.failed_stage.empty()) j["failed_stage"] = manifest.failed_stage;
  j["stages"] = json::array();
  for (const auto& s : manifest.stages) {
    json stage;
    stage["stage"] = s.stage;
    stage["duration_ms"] = s.duration_ms;
    stage["inputs"] = json::array();
    for (const auto& a : s.inputs) stage["inputs"].push_back({{"path", a.path}, {"fnv64", a.fnv64}});
    stage["outputs"] = json::array();
    for (const auto& a : s.outputs)
      stage["outputs"].push_back({{"path", a.path}, {"fnv64", a.fnv64}});
    j["stages"].push_back(std::move(stage));
  }
  write_json(path, j);
}

std::vector<std::string> stage_preprocess(PipelineContext& ctx) {
  ctx.cohort = load_cohort(ctx.cfg.cohort_csv, ctx.cfg.schema_json);
  ctx.groups = complete_subject_groups(ctx.cohort);

  auto [encoded, codebook] = encode_categoricals(ctx.cohort);
  OutlierReport outliers;
  Eigen::MatrixXd base;
  if (encoded.missing.any()) {
    base = impute_knn(encoded, ctx.cfg.preprocess.impute_k).values;
  } else {
    base = encoded.values;
  }
  outliers = mahalanobis_outliers(base, ctx.cfg.preprocess.outlier_alpha);

  EncodedMatrix complete;
  complete.values = base;
  complete.missing = BoolGrid::Constant(base.rows(), base.cols(), false);
  complete.columns = encoded.columns;
  if (!ctx.cfg.preprocess.quadratic.empty())
    complete = augment_quadratic(complete, ctx.cfg.preprocess.quadratic);

  ctx.data.X = complete.values;
  ctx.data.columns = complete.columns;
  ctx.data.codebook = codebook;
  ctx.data.keys.clear();
  for (const auto& r : ctx.cohort.rows)
    ctx.data.keys.push_back({r.subject_id, r.visit, r.outcome, false});

  const fs::path out = ctx.cfg.out_dir;
  CsvTable csv;
  csv.header = {"subject_id", "visit"};
  for (const auto& c : ctx.data.columns) csv.header.push_back(c.name);
  csv.header.push_back("outcome");
  for (std::size_t i = 0; i < ctx.data.keys.size(); ++i) {
    std::vector<std::string> row{ctx.data.keys[i].subject_id,
                                 std::to_string(ctx.data.keys[i].visit)};
    for (Eigen::Index j = 0; j < ctx.data.X.cols(); ++j)
      row.push_back(format_double(ctx.data.X(static_cast<Eigen::Index>(i), j)));
    row.push_back(std::to_string(ctx.data.keys[i].outcome));
    csv.rows.push_back(std::move(row));
  }
  write_csv(out / "preprocessed.csv", csv);

  json cb;
  for (const auto& [feature, levels] : codebook.levels) cb[feature] = levels;
  write_json(out / "codebook.json", cb);

  json rep;
  rep["alpha"] = outliers.alpha;
  rep["dof"] = outliers.dof;
  rep["threshold"] = outliers.threshold;
  rep["rows"] = json::array();
  for (Eigen::Index i = 0; i < outliers.d2.size(); ++i)
    rep["rows"].push_back({{"subject_id", ctx.data.keys[static_cast<std::size_t>(i)].subject_id},
                           {"visit", ctx.data.keys[static_cast<std::size_t>(i)].visit},
                           {"d2", outliers.d2[i]},
                           {"flag", static_cast<bool>(outliers.flags[i])}});
  write_json(out / "outlier_report.json", rep);

  write_descriptive_csv(summarize_by_outcome(ctx.cohort), out / "descriptive_summary.csv");
  return {"preprocessed.csv", "codebook.json", "outlier_report.json", "descriptive_summary.csv"};
}

std::vector<std::string> stage_rank(PipelineContext& ctx) {
  RankConfig rc;
  rc.forest.n_trees = ctx.cfg.rank.n_trees;
  rc.n_top = ctx.cfg.rank.n_top;
  rc.folds = ctx.cfg.rank.folds;
  rc.smote_percent = ctx.cfg.resample.smote_percent;
  rc.smote_classes = ctx.cfg.resample.smote_classes;
  rc.smote_k = ctx.cfg.resample.smote_k;
  rc.seed = Rng(ctx.cfg.seed).child("rank").next_u64();
  ctx.importance = rank_features(ctx.data, rc);
  ctx.top_features = ctx.importance.top;

  CsvTable csv;
  csv.header = {"feature", "mean"};
  for (int f = 1; f <= rc.folds; ++f) csv.header.push_back("fold" + std::to_string(f));
  csv.header.push_back("rank");
  for (std::size_t i = 0; i < ctx.importance.feature.size(); ++i) {
    std::vector<std::string> row{ctx.importance.feature[i],
                                 format_double(ctx.importance.mean_importance[i])};
    for (int f = 0; f < rc.folds; ++f)
      row.push_back(format_double(ctx.importance.per_fold(static_cast<Eigen::Index>(i), f)));
    row.push_back(std::to_string(ctx.importance.rank[i]));
    csv.rows.push_back(std::move(row));
  }
  write_csv(ctx.cfg.out_dir / "importance.csv", csv);

  write_json(ctx.cfg.out_dir / "top_features.json", json{{"features", ctx.top_features}});

  std::vector<std::pair<std::string, double>> bars;
  for (std::size_t i = 0; i < ctx.importance.feature.size() && i < 25; ++i)
    bars.emplace_back(ctx.importance.feature[i], ctx.importance.mean_importance[i]);
  write_bar_svg(ctx.cfg.out_dir / "importance.svg", bars, "Feature importance (mean decrease in Gini)");
  return {"importance.csv", "top_features.json", "importance.svg"};
}

std::vector<std::string> stage_fit(PipelineContext& ctx) {
  std::vector<std::string> outputs;
  const LgmmDesign design = LgmmDesign::build(ctx.data, ctx.top_features);
  ctx.lgmm = lgmm_fit(design, ctx.cfg.model);
  write_json(ctx.cfg.out_dir / "lgmm_fit.json", fit_to_json(ctx.lgmm));
  write_wald_csv(ctx.cfg.out_dir / "wald_lgmm.csv", wald_table(ctx.lgmm));
  outputs.push_back("lgmm_fit.json");
  outputs.push_back("wald_lgmm.csv");

  for (int v = 1; v <= ctx.cohort.n_visits; ++v) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < ctx.data.keys.size(); ++i)
      if (ctx.data.keys[i].visit == v) rows.push_back(static_cast<int>(i));
    if (rows.empty()) continue;
    Eigen::MatrixXd X(rows.size(), static_cast<Eigen::Index>(ctx.top_features.size()));
    const Eigen::MatrixXd all = ctx.data.select(ctx.top_features);
    std::vector<RowKey> keys;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) = all.row(rows[i]);
      keys.push_back(ctx.data.keys[static_cast<std::size_t>(rows[i])]);
    }
    const LgmmDesign d = LgmmDesign::build_rows(X, keys, ctx.top_features);
    const LgmmFit fit = lr_fit(d, ctx.cfg.model);
    const std::string stem = "lr_visit" + std::to_string(v);
    write_json(ctx.cfg.out_dir / (stem + ".json"), fit_to_json(fit));
    write_wald_csv(ctx.cfg.out_dir / ("wald_" + stem + ".csv"), wald_table(fit));
    outputs.push_back(stem + ".json");
    outputs.push_back("wald_" + stem + ".csv");
  }
  return outputs;
}

std::vector<std::string> stage_embed(PipelineContext& ctx) {
  TsneConfig tc = ctx.cfg.tsne;
  tc.seed = Rng(ctx.cfg.seed).child("tsne").next_u64();
  const Eigen::MatrixXd X = ctx.data.select(ctx.top_features);
  ctx.embedding = tsne_embed(X, tc);
  ctx.embed_keys = ctx.data.keys;

  CsvTable coords;
  coords.header = {"subject_id", "visit", "y1", "y2"};
  for (std::size_t i = 0; i < ctx.embed_keys.size(); ++i)
    coords.rows.push_back({ctx.embed_keys[i].subject_id, std::to_string(ctx.embed_keys[i].visit),
                           format_double(ctx.embedding.coords(static_cast<Eigen::Index>(i), 0)),
                           format_double(ctx.embedding.coords(static_cast<Eigen::Index>(i), 1))});
  write_csv(ctx.cfg.out_dir / "embedding.csv", coords);

  CsvTable trace;
  trace.header = {"iteration", "kl_cost"};
  for (std::size_t i = 0; i < ctx.embedding.cost_trace.size(); ++i)
    trace.rows.push_back({std::to_string(i), format_double(ctx.embedding.cost_trace[i])});
  write_csv(ctx.cfg.out_dir / "tsne_cost_trace.csv", trace);
  return {"embedding.csv", "tsne_cost_trace.csv"};
}

std::vector<std::string> stage_cluster(PipelineContext& ctx) {
  GmmConfig gc;
  gc.restarts = ctx.cfg.cluster.restarts;
  gc.seed = Rng(ctx.cfg.seed).child("gmm").next_u64();

  if (ctx.cfg.cluster.k > 0) {
    ctx.gmm = gmm_fit_em(ctx.embedding.coords, ctx.cfg.cluster.k, gc);
  } else {
    const SelectKResult sel =
        select_k(ctx.embedding.coords, ctx.cfg.cluster.k_min, ctx.cfg.cluster.k_max, gc);
    ctx.gmm = sel.models[static_cast<std::size_t>(sel.best_k - ctx.cfg.cluster.k_min)];
  }
  ctx.assignment = assign_clusters(ctx.gmm, ctx.embedding.coords);

  json j;
  j["K"] = ctx.gmm.K;
  j["weights"] = std::vector<double>(ctx.gmm.weights.data(),
                                     ctx.gmm.weights.data() + ctx.gmm.weights.size());
  j["means"] = json::array();
  for (const auto& m : ctx.gmm.means) j["means"].push_back({m[0], m[1]});
  j["covariances"] = json::array();
  for (const auto& c : ctx.gmm.covariances)
    j["covariances"].push_back({{c(0, 0), c(0, 1)}, {c(1, 0), c(1, 1)}});
  j["loglik"] = ctx.gmm.loglik;
  j["bic"] = ctx.gmm.bic;
  j["loglik_trace"] = ctx.gmm.loglik_trace;
  j["converged"] = ctx.gmm.converged;
  j["rescued_components"] = ctx.gmm.rescued_components;
  j["restarts"] = ctx.gmm.config.restarts;
  write_json(ctx.cfg.out_dir / "gmm_model.json", j);

  CsvTable csv;
  csv.header = {"subject_id", "visit", "cluster"};
  for (int k = 1; k <= ctx.gmm.K; ++k) csv.header.push_back("resp_" + std::to_string(k));
  for (std::size_t i = 0; i < ctx.embed_keys.size(); ++i) {
    std::vector<std::string> row{ctx.embed_keys[i].subject_id,
                                 std::to_string(ctx.embed_keys[i].visit),
                                 std::to_string(ctx.assignment.labels[i] + 1)};
    for (int k = 0; k < ctx.gmm.K; ++k)
      row.push_back(format_double(ctx.assignment.responsibilities(static_cast<Eigen::Index>(i), k)));
    csv.rows.push_back(std::move(row));
  }
  write_csv(ctx.cfg.out_dir / "assignments.csv", csv);
  return {"gmm_model.json", "assignments.csv"};
}

std::vector<std::string> stage_phenotype_analysis(PipelineContext& ctx) {
  const fs::path out = ctx.cfg.out_dir;
  const auto [c1, c2] = analysis_clusters(ctx.gmm);

  // Scatter of the embedding: color = cluster, marker = visit.
  std::vector<ScatterPoint> pts;
  for (std::size_t i = 0; i < ctx.embed_keys.size(); ++i)
    pts.push_back({ctx.embedding.coords(static_cast<Eigen::Index>(i), 0),
                   ctx.embedding.coords(static_cast<Eigen::Index>(i), 1),
                   ctx.assignment.labels[i], ctx.embed_keys[i].visit - 1});
  std::vector<std::string> cluster_names, visit_names;
  for (int k = 1; k <= ctx.gmm.K; ++k) cluster_names.push_back("Cluster " + std::to_string(k));
  for (int v = 1; v <= ctx.cohort.n_visits; ++v) visit_names.push_back("Visit " + std::to_string(v));
  write_scatter_svg(out / "embedding.svg", pts, "t-SNE embedding by cluster", cluster_names,
                    visit_names);

  std::vector<std::string> outputs{"embedding.svg"};

  if (c2 >= 0) {
    const KldReport kld =
        per_feature_kld(ctx.data.X, ctx.data.columns, ctx.assignment.labels, c1, c2);
    CsvTable kcsv;
    kcsv.header = {"feature", "kld", "method"};
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& r : kld.rows) {
      kcsv.rows.push_back({r.feature, format_double(r.kld), r.method});
      if (bars.size() < 25) bars.emplace_back(r.feature, r.kld);
    }
    write_csv(out / "kld_report.csv", kcsv);
    write_bar_svg(out / "kld_report.svg", bars,
                  "Feature distribution divergence, cluster 1 vs cluster 2");
    outputs.push_back("kld_report.csv");
    outputs.push_back("kld_report.svg");

    const ComparisonTable cmp =
        compare_clusters(ctx.data.X, ctx.data.columns, ctx.assignment.labels, c1, c2);
    CsvTable ccsv;
    ccsv.header = {"variable", "level", "Cluster 1 (n = " + std::to_string(cmp.n1) + ")",
                   "Cluster 2 (n = " + std::to_string(cmp.n2) + ")", "p-value", "Sig code",
                   "method"};
    for (const auto& r : cmp.rows)
      ccsv.rows.push_back({r.feature, r.level, r.cluster1_summary, r.cluster2_summary,
                           format_double(r.p), r.sig, r.method});
    write_csv(out / "comparison.csv", ccsv);
    outputs.push_back("comparison.csv");
  }

  std::vector<EmbeddedPoint> points;
  for (std::size_t i = 0; i < ctx.embed_keys.size(); ++i)
    points.push_back({ctx.embed_keys[i].subject_id, ctx.embed_keys[i].visit,
                      ctx.embedding.coords.row(static_cast<Eigen::Index>(i)).transpose(),
                      ctx.assignment.labels[i]});
  const TrajectorySummary traj =
      trajectory_distances(points, ctx.groups, ctx.cohort.n_visits, ctx.gmm.K);
  json tj;
  tj["cluster_attribution"] = "later-visit";
  tj["skipped_pairs"] = traj.skipped_pairs;
  tj["visit_pairs"] = json::array();
  for (const auto& pair : traj.pairs) {
    json p;
    p["from_visit"] = pair.visit_from;
    p["to_visit"] = pair.visit_to;
    p["n_subjects"] = pair.n_subjects;
    p["by_group_cluster"] = json::array();
    for (const auto& [key, cell] : pair.by_group_cluster)
      p["by_group_cluster"].push_back({{"group", key.first},
                                       {"cluster", key.second + 1},
                                       {"mean_distance", cell.mean_distance},
                                       {"n", cell.n_pairs}});
    json trans = json::array();
    for (Eigen::Index r = 0; r < pair.transitions.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < pair.transitions.cols(); ++c)
        row.push_back(pair.transitions(r, c));
      trans.push_back(std::move(row));
    }
    p["transitions"] = std::move(trans);
    tj["visit_pairs"].push_back(std::move(p));
  }
  write_json(out / "trajectory.json", tj);
  outputs.push_back("trajectory.json");
  return outputs;
}

std::vector<std::string> stage_metrics(PipelineContext& ctx) {
  const fs::path out = ctx.cfg.out_dir;
  CvConfig cv;
  cv.folds = ctx.cfg.evaluate.folds;
  cv.threshold = ctx.cfg.evaluate.threshold;
  cv.smote_percent = ctx.cfg.resample.smote_percent;
  cv.smote_classes = ctx.cfg.resample.smote_classes;
  cv.smote_k = ctx.cfg.resample.smote_k;
  cv.lgmm = ctx.cfg.model;
  cv.seed = Rng(ctx.cfg.seed).child("cv").next_u64();

  const CvOutcome lgmm_cv = cross_validate(ctx.data, ctx.top_features, CvModel::Lgmm, cv);
  const CvOutcome lr_cv =
      cross_validate(ctx.data, ctx.top_features, CvModel::LrPerVisit, cv, &lgmm_cv.folds);

  CsvTable per_fold = metrics_csv_header();
  for (const auto& r : lgmm_cv.per_fold) append_metrics_row(per_fold, "lgmm", r);
  append_metrics_row(per_fold, "lgmm", lgmm_cv.pooled);
  for (const auto& r : lr_cv.per_fold) append_metrics_row(per_fold, "lr", r);
  append_metrics_row(per_fold, "lr", lr_cv.pooled);
  write_csv(out / "metrics_cv.csv", per_fold);

  CsvTable cmp;
  cmp.header = {"metric", "lgmm", "lr"};
  const auto add_cmp = [&](const std::string& name, const std::optional<double>& a,
                           const std::optional<double>& b) {
    cmp.rows.push_back({name, metric_str(a), metric_str(b)});
  };
  add_cmp("accuracy", lgmm_cv.pooled.acc, lr_cv.pooled.acc);
  add_cmp("precision", lgmm_cv.pooled.pre, lr_cv.pooled.pre);
  add_cmp("specificity", lgmm_cv.pooled.spec, lr_cv.pooled.spec);
  add_cmp("npv", lgmm_cv.pooled.npv, lr_cv.pooled.npv);
  add_cmp("recall", lgmm_cv.pooled.recall, lr_cv.pooled.recall);
  write_csv(out / "model_comparison.csv", cmp);

  CsvTable by_visit = metrics_csv_header();
  for (const auto& r : metrics_by_visit(lgmm_cv.oof, ctx.cohort.n_visits))
    append_metrics_row(by_visit, "lgmm", r);
  write_csv(out / "metrics_by_visit.csv", by_visit);

  CsvTable by_group = metrics_csv_header();
  for (const auto& r : metrics_by_group(lgmm_cv.oof, ctx.groups))
    append_metrics_row(by_group, "lgmm", r);
  write_csv(out / "metrics_by_group.csv", by_group);

  std::vector<std::string> outputs{"metrics_cv.csv", "model_comparison.csv",
                                   "metrics_by_visit.csv", "metrics_by_group.csv"};

  if (!ctx.cfg.evaluate.subgroups.empty()) {
    CvConfig sub_cv = cv;
    sub_cv.smote_percent = ctx.cfg.evaluate.subgroup_smote_percent;
    sub_cv.smote_classes = SmoteClasses::Both;
    sub_cv.seed = Rng(ctx.cfg.seed).child("subgroup").next_u64();
    CsvTable sub = metrics_csv_header();
    sub.header.push_back("features");
    for (int g : ctx.cfg.evaluate.subgroups) {
      try {
        const auto results = evaluate_groups(ctx.data, ctx.groups, {g}, sub_cv,
                                             ctx.cfg.evaluate.subgroup_n_top,
                                             ctx.cfg.rank.n_trees);
        for (const auto& res : results) {
          MetricsReport r = res.cv.pooled;
          r.stratum = "group " + std::to_string(res.group);
          append_metrics_row(sub, "lgmm", r);
          std::string joined;
          for (const auto& f : res.features) joined += (joined.empty() ? "" : ";") + f;
          sub.rows.back().push_back(joined);
        }
      } catch (const Error& e) {
        sub.rows.push_back({"lgmm", "group " + std::to_string(g), "", "", "", "", "", "", "", "",
                            "", std::string("skipped: ") + e.what()});
      }
    }
    write_csv(out / "metrics_subgroups.csv", sub);
    outputs.push_back("metrics_subgroups.csv");
  }
  return outputs;
}

Manifest run_pipeline(const PipelineConfig& config) {
  if (config.out_dir.empty()) throw ValidationError("run_pipeline: out_dir is required");
  fs::create_directories(config.out_dir);

  PipelineContext ctx;
  ctx.cfg = config;

  Manifest manifest;
  manifest.seed = config.seed;

  const std::vector<std::pair<std::string, std::vector<std::string> (*)(PipelineContext&)>>
      stages = {{"preprocess", &stage_preprocess},
                {"rank", &stage_rank},
                {"fit", &stage_fit},
                {"embed", &stage_embed},
                {"cluster", &stage_cluster},
                {"phenotype_analysis", &stage_phenotype_analysis},
                {"metrics", &stage_metrics}};

  for (const auto& [name, fn] : stages) {
    StageRecord record;
    record.stage = name;
    if (name == "preprocess") {
      if (!fs::exists(config.cohort_csv))
        throw StageFailed(name, "missing input " + config.cohort_csv.string());
      if (!fs::exists(config.schema_json))
        throw StageFailed(name, "missing input " + config.schema_json.string());
      record.inputs.push_back({config.cohort_csv.string(), hash_file_hex(config.cohort_csv)});
      record.inputs.push_back({config.schema_json.string(), hash_file_hex(config.schema_json)});
    }
    const auto start = std::chrono::steady_clock::now();
    try {
      const std::vector<std::string> produced = fn(ctx);
      for (const auto& p : produced)
        record.outputs.push_back({p, hash_file_hex(config.out_dir / p)});
    } catch (const StageFailed&) {
      manifest.failed_stage = name;
      write_manifest(manifest, config.out_dir / "manifest.json");
      throw;
    } catch (const std::exception& e) {
      manifest.failed_stage = name;
      write_manifest(manifest, config.out_dir / "manifest.json");
      throw StageFailed(name, e.what());
    }
    record.duration_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    manifest.stages.push_back(std::move(record));
  }
  write_manifest(manifest, config.out_dir / "manifest.json");
  return manifest;
}

}  // namespace phenotyper
