#include "phenotyper/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "phenotyper/errors.hpp"
#include "phenotyper/rng.hpp"
#include "phenotyper/stats.hpp"

namespace phenotyper {

using nlohmann::json;

void SynthConfig::validate() const {
  if (n_subjects < 1) throw ValidationError("synth: n_subjects must be >= 1");
  if (n_visits < 1) throw ValidationError("synth: n_visits must be >= 1");
  if (sigma_mu < 0.0) throw ValidationError("synth: sigma_mu must be >= 0");
  if (missing_rate < 0.0 || missing_rate >= 1.0)
    throw ValidationError("synth: missing_rate must be in [0, 1)");
  if (true_beta.size() != features.size() + 1)
    throw ValidationError("synth: true_beta needs intercept plus one slope per feature");
  for (const auto& f : features) {
    if (f.spec.kind == FeatureKind::Continuous && f.sd < 0.0)
      throw ValidationError("synth: feature '" + f.spec.name + "' has negative sd");
    if (f.spec.kind == FeatureKind::Binary && (f.prob < 0.0 || f.prob > 1.0))
      throw ValidationError("synth: feature '" + f.spec.name + "' probability outside [0,1]");
    if (f.spec.kind == FeatureKind::Categorical) {
      if (f.level_probs.size() != f.spec.levels.size())
        throw ValidationError("synth: feature '" + f.spec.name + "' needs one probability per level");
      double total = 0.0;
      for (double p : f.level_probs) {
        if (p < 0.0 || p > 1.0)
          throw ValidationError("synth: feature '" + f.spec.name + "' probability outside [0,1]");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError("synth: feature '" + f.spec.name + "' level probabilities must sum to 1");
    }
  }
  if (group_targets) {
    if (group_targets->size() != 8) throw ValidationError("synth: group_targets needs 8 counts");
    if (n_visits != 3) throw ValidationError("synth: group_targets requires n_visits = 3");
    long total = 0;
    for (int c : *group_targets) {
      if (c < 0) throw ValidationError("synth: group target counts must be >= 0");
      total += c;
    }
    if (total != n_subjects)
      throw ValidationError("synth: group_targets must sum to n_subjects");
  }
}

namespace {

// Lexicographic code per declared level, matching the downstream codebook.
std::vector<std::vector<int>> lexicographic_codes(const std::vector<FeatureGen>& features) {
  std::vector<std::vector<int>> codes(features.size());
  for (std::size_t f = 0; f < features.size(); ++f) {
    if (features[f].spec.kind != FeatureKind::Categorical) continue;
    const auto& levels = features[f].spec.levels;
    std::vector<std::string> sorted = levels;
    std::sort(sorted.begin(), sorted.end());
    codes[f].resize(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto it = std::lower_bound(sorted.begin(), sorted.end(), levels[i]);
      codes[f][i] = static_cast<int>(it - sorted.begin());
    }
  }
  return codes;
}

struct DrawnSubject {
  std::vector<Observation> rows;  // subject_id filled in by caller
  std::vector<double> true_p;
  double mu = 0.0;
  int group = -1;  // valid only when n_visits == 3
};

DrawnSubject draw_subject(const SynthConfig& cfg, const std::vector<std::vector<int>>& lex_codes,
                          Rng feat_rng, Rng mu_rng, Rng outcome_rng) {
  DrawnSubject out;
  out.mu = cfg.sigma_mu > 0.0 ? mu_rng.normal(0.0, cfg.sigma_mu) : 0.0;
  const std::size_t p = cfg.features.size();
  std::array<int, 3> triple{0, 0, 0};
  for (int v = 1; v <= cfg.n_visits; ++v) {
    Observation obs;
    obs.visit = v;
    obs.values.resize(p);
    obs.missing.assign(p, false);
    double eta = cfg.true_beta[0] + out.mu;
    for (std::size_t f = 0; f < p; ++f) {
      const FeatureGen& gen = cfg.features[f];
      double x = 0.0;
      switch (gen.spec.kind) {
        case FeatureKind::Continuous:
          x = feat_rng.normal(gen.mean, gen.sd);
          obs.values[f] = x;
          break;
        case FeatureKind::Binary:
          x = feat_rng.bernoulli(gen.prob) ? 1.0 : 0.0;
          obs.values[f] = x;
          break;
        case FeatureKind::Categorical: {
          const double u = feat_rng.uniform();
          double acc = 0.0;
          std::size_t pick = gen.spec.levels.size() - 1;
          for (std::size_t l = 0; l < gen.level_probs.size(); ++l) {
            acc += gen.level_probs[l];
            if (u < acc) {
              pick = l;
              break;
            }
          }
          obs.values[f] = gen.spec.levels[pick];
          x = static_cast<double>(lex_codes[f][pick]);
          break;
        }
      }
      eta += cfg.true_beta[f + 1] * x;
    }
    const double prob = logistic(eta);
    obs.outcome = outcome_rng.bernoulli(prob) ? 1 : 0;
    if (v <= 3) triple[v - 1] = obs.outcome;
    out.true_p.push_back(prob);
    out.rows.push_back(std::move(obs));
  }
  if (cfg.n_visits == 3) out.group = 4 * triple[0] + 2 * triple[1] + triple[2];
  return out;
}

std::string subject_name(int index, int width) {
  std::string digits = std::to_string(index + 1);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, width - digits.size(), '0');
  return "S" + digits;
}

}  // namespace

SynthResult generate_cohort(const SynthConfig& config) {
  config.validate();
  const auto lex_codes = lexicographic_codes(config.features);
  const Rng root(config.seed);
  const Rng feat_root = root.child("features");
  const Rng mu_root = root.child("mu");
  const Rng outcome_root = root.child("outcome");
  const Rng mask_root = root.child("mask");

  SynthResult result;
  result.cohort.n_visits = config.n_visits;
  for (const auto& f : config.features) result.cohort.specs.push_back(f.spec);
  result.truth.beta = config.true_beta;
  result.truth.sigma_mu = config.sigma_mu;

  const int width = static_cast<int>(std::to_string(config.n_subjects).size());
  std::vector<DrawnSubject> accepted;
  accepted.reserve(config.n_subjects);

  if (config.group_targets) {
    std::array<long, 8> remaining{};
    for (int g = 0; g < 8; ++g) remaining[g] = (*config.group_targets)[g];
    const long budget = 10000L * config.n_subjects;
    long attempt = 0;
    while (static_cast<int>(accepted.size()) < config.n_subjects) {
      if (attempt >= budget)
        throw InfeasibleTargets("synth: group targets not met within " + std::to_string(budget) +
                                " draws");
      DrawnSubject cand = draw_subject(config, lex_codes, feat_root.child(attempt),
                                       mu_root.child(attempt), outcome_root.child(attempt));
      ++attempt;
      if (remaining[cand.group] > 0) {
        remaining[cand.group]--;
        accepted.push_back(std::move(cand));
      }
    }
    result.truth.rejection_draws = attempt;
  } else {
    for (int i = 0; i < config.n_subjects; ++i)
      accepted.push_back(draw_subject(config, lex_codes, feat_root.child(i), mu_root.child(i),
                                      outcome_root.child(i)));
    result.truth.rejection_draws = config.n_subjects;
  }

  // Missingness applies to feature cells only, never outcomes; the mask
  // stream is indexed by subject slot so it is unaffected by rejection.
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    auto& sub = accepted[i];
    const std::string sid = subject_name(static_cast<int>(i), width);
    Rng mask_rng = mask_root.child(i);
    result.truth.mu.emplace_back(sid, sub.mu);
    for (std::size_t v = 0; v < sub.rows.size(); ++v) {
      sub.rows[v].subject_id = sid;
      for (std::size_t f = 0; f < config.features.size(); ++f) {
        if (config.missing_rate > 0.0 && mask_rng.bernoulli(config.missing_rate)) {
          sub.rows[v].missing[f] = true;
          sub.rows[v].values[f] = config.features[f].spec.kind == FeatureKind::Categorical
                                      ? CellValue(std::string())
                                      : CellValue(0.0);
        }
      }
      result.truth.rows.push_back({sid, sub.rows[v].visit, sub.true_p[v]});
      result.cohort.rows.push_back(std::move(sub.rows[v]));
    }
  }
  result.cohort.validate();
  return result;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open synth config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("synth config parse error: " + std::string(e.what()));
  }

  static const std::set<std::string> known{"n_subjects", "n_visits", "features", "true_beta",
                                           "sigma_mu", "missing_rate", "group_targets", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ValidationError("synth config: unknown key '" + key + "'");

  SynthConfig cfg;
  cfg.n_subjects = j.at("n_subjects").get<int>();
  cfg.n_visits = j.value("n_visits", 3);
  cfg.sigma_mu = j.value("sigma_mu", 0.0);
  cfg.missing_rate = j.value("missing_rate", 0.0);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.true_beta = j.at("true_beta").get<std::vector<double>>();
  if (j.contains("group_targets")) cfg.group_targets = j["group_targets"].get<std::vector<int>>();

  static const std::set<std::string> known_feat{"name", "kind", "unit",  "levels",
                                                "mean", "sd",   "probs", "p"};
  for (const auto& f : j.at("features")) {
    for (const auto& [key, _] : f.items())
      if (!known_feat.count(key))
        throw ValidationError("synth config: unknown feature key '" + key + "'");
    FeatureGen gen;
    gen.spec.name = f.at("name").get<std::string>();
    gen.spec.kind = kind_from_name(f.at("kind").get<std::string>());
    gen.spec.unit = f.value("unit", "");
    if (gen.spec.kind == FeatureKind::Continuous) {
      gen.mean = f.value("mean", 0.0);
      gen.sd = f.value("sd", 1.0);
    } else if (gen.spec.kind == FeatureKind::Binary) {
      gen.prob = f.value("p", 0.5);
    } else {
      gen.spec.levels = f.at("levels").get<std::vector<std::string>>();
      gen.level_probs = f.at("probs").get<std::vector<double>>();
    }
    cfg.features.push_back(std::move(gen));
  }
  cfg.validate();
  return cfg;
}

void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  json j;
  j["beta"] = truth.beta;
  j["sigma_mu"] = truth.sigma_mu;
  j["rejection_draws"] = truth.rejection_draws;
  j["mu"] = json::object();
  for (const auto& [sid, mu] : truth.mu) j["mu"][sid] = mu;
  j["rows"] = json::array();
  for (const auto& r : truth.rows)
    j["rows"].push_back({{"subject_id", r.subject_id}, {"visit", r.visit}, {"true_p", r.true_p}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace phenotyper
