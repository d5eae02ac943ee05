#include "phenotyper/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <span>

#include "phenotyper/csv.hpp"
#include "phenotyper/errors.hpp"
#include "phenotyper/stats.hpp"

namespace phenotyper {

using nlohmann::json;

std::string kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::Continuous: return "continuous";
    case FeatureKind::Categorical: return "categorical";
    case FeatureKind::Binary: return "binary";
  }
  return "continuous";
}

FeatureKind kind_from_name(const std::string& s) {
  if (s == "continuous") return FeatureKind::Continuous;
  if (s == "categorical") return FeatureKind::Categorical;
  if (s == "binary") return FeatureKind::Binary;
  throw ValidationError("unknown feature kind '" + s + "'");
}

int Cohort::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].name == name) return static_cast<int>(i);
  return -1;
}

void Cohort::validate() const {
  if (n_visits < 1) throw ValidationError("cohort: n_visits must be >= 1");
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second)
      throw ValidationError("cohort: duplicate feature name '" + s.name + "'");
    if (s.kind == FeatureKind::Categorical && s.levels.empty())
      throw ValidationError("cohort: categorical feature '" + s.name + "' lists no levels");
    if (s.kind != FeatureKind::Categorical && !s.levels.empty())
      throw ValidationError("cohort: non-categorical feature '" + s.name + "' lists levels");
  }
  std::set<std::pair<std::string, int>> seen;
  for (const auto& r : rows) {
    if (r.visit < 1 || r.visit > n_visits)
      throw ValidationError("cohort: visit " + std::to_string(r.visit) + " outside 1.." +
                            std::to_string(n_visits));
    if (!seen.insert({r.subject_id, r.visit}).second)
      throw ValidationError("cohort: duplicate (subject, visit) = (" + r.subject_id + ", " +
                            std::to_string(r.visit) + ")");
    if (r.values.size() != specs.size() || r.missing.size() != specs.size())
      throw ValidationError("cohort: row width mismatch for subject " + r.subject_id);
    if (r.outcome != 0 && r.outcome != 1)
      throw ValidationError("cohort: outcome must be 0/1 for subject " + r.subject_id);
  }
}

OutcomeGroup assign_outcome_group(const std::array<int, 3>& outcomes_by_visit) {
  for (int v : outcomes_by_visit)
    if (v != 0 && v != 1) throw MissingVisit("assign_outcome_group: outcome must be 0/1 for all three visits");
  return OutcomeGroup{4 * outcomes_by_visit[0] + 2 * outcomes_by_visit[1] + outcomes_by_visit[2]};
}

std::map<std::string, int> complete_subject_groups(const Cohort& cohort) {
  std::map<std::string, std::array<int, 3>> triple;
  std::map<std::string, int> seen_visits;
  for (const auto& r : cohort.rows) {
    if (r.visit < 1 || r.visit > 3) continue;
    auto& t = triple.try_emplace(r.subject_id, std::array<int, 3>{-1, -1, -1}).first->second;
    t[r.visit - 1] = r.outcome;
    seen_visits[r.subject_id]++;
  }
  std::map<std::string, int> groups;
  for (const auto& [sid, t] : triple) {
    if (t[0] < 0 || t[1] < 0 || t[2] < 0) continue;  // incomplete subjects excluded
    groups[sid] = assign_outcome_group(t).code;
  }
  return groups;
}

DescriptiveTable summarize_by_outcome(const Cohort& cohort) {
  if (cohort.rows.empty()) throw ValidationError("summarize_by_outcome: empty cohort");
  DescriptiveTable table;
  table.n_visits = cohort.n_visits;
  table.stratum_sizes.assign(cohort.n_visits, {0, 0});
  for (const auto& r : cohort.rows) table.stratum_sizes[r.visit - 1][r.outcome]++;

  for (std::size_t f = 0; f < cohort.specs.size(); ++f) {
    const auto& spec = cohort.specs[f];
    DescriptiveRow row;
    row.feature = spec.name;
    row.kind = spec.kind;
    row.cells.resize(cohort.n_visits);
    for (int v = 1; v <= cohort.n_visits; ++v) {
      for (int s = 0; s < 2; ++s) {
        DescriptiveCell& cell = row.cells[v - 1][s];
        if (spec.kind == FeatureKind::Continuous) {
          std::vector<double> vals;
          for (const auto& r : cohort.rows)
            if (r.visit == v && r.outcome == s && !r.missing[f])
              vals.push_back(std::get<double>(r.values[f]));
          cell.n = static_cast<int>(vals.size());
          if (cell.n >= 1) {
            cell.mean = mean(vals);
            cell.sd = cell.n >= 2 ? sample_sd(vals) : 0.0;
            cell.degenerate = cell.n == 1;
          }
        } else {
          std::vector<std::string> lvls =
              spec.kind == FeatureKind::Binary ? std::vector<std::string>{"0", "1"} : spec.levels;
          std::map<std::string, int> counts;
          for (const auto& l : lvls) counts[l] = 0;
          for (const auto& r : cohort.rows) {
            if (r.visit != v || r.outcome != s || r.missing[f]) continue;
            if (spec.kind == FeatureKind::Binary) {
              counts[std::get<double>(r.values[f]) != 0.0 ? "1" : "0"]++;
            } else {
              counts[std::get<std::string>(r.values[f])]++;
            }
            cell.n++;
          }
          for (const auto& l : lvls) cell.level_counts.emplace_back(l, counts[l]);
        }
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

double parse_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ValidationError("cannot parse " + what + " value '" + s + "'");
  return v;
}

}  // namespace

Cohort load_cohort(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path) {
  std::ifstream sin(schema_path);
  if (!sin) throw ValidationError("cannot open schema " + schema_path.string());
  json schema;
  try {
    schema = json::parse(sin);
  } catch (const json::exception& e) {
    throw ValidationError("schema parse error: " + std::string(e.what()));
  }

  Cohort cohort;
  cohort.n_visits = schema.value("n_visits", 3);
  for (const auto& f : schema.at("features")) {
    FeatureSpec spec;
    spec.name = f.at("name").get<std::string>();
    spec.kind = kind_from_name(f.at("kind").get<std::string>());
    spec.unit = f.value("unit", "");
    if (f.contains("levels")) spec.levels = f["levels"].get<std::vector<std::string>>();
    cohort.specs.push_back(std::move(spec));
  }

  const CsvTable csv = read_csv(csv_path);
  const std::size_t p = cohort.specs.size();
  if (csv.header.size() != p + 3 || csv.header[0] != "subject_id" || csv.header[1] != "visit" ||
      csv.header.back() != "outcome")
    throw ValidationError(csv_path.string() +
                          ": header must be subject_id,visit,<features...>,outcome");
  for (std::size_t j = 0; j < p; ++j)
    if (csv.header[j + 2] != cohort.specs[j].name)
      throw ValidationError(csv_path.string() + ": column '" + csv.header[j + 2] +
                            "' does not match schema feature '" + cohort.specs[j].name + "'");

  for (const auto& raw : csv.rows) {
    Observation obs;
    obs.subject_id = raw[0];
    obs.visit = static_cast<int>(parse_number(raw[1], "visit"));
    obs.values.resize(p);
    obs.missing.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      const std::string& cell = raw[j + 2];
      if (cell.empty()) {
        obs.missing[j] = true;
        obs.values[j] = cohort.specs[j].kind == FeatureKind::Categorical
                            ? CellValue(std::string())
                            : CellValue(0.0);
      } else if (cohort.specs[j].kind == FeatureKind::Categorical) {
        obs.values[j] = cell;
      } else {
        obs.values[j] = parse_number(cell, "feature " + cohort.specs[j].name);
      }
    }
    obs.outcome = static_cast<int>(parse_number(raw.back(), "outcome"));
    cohort.rows.push_back(std::move(obs));
  }
  cohort.validate();
  return cohort;
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& csv_path,
                 const std::filesystem::path& schema_path) {
  json schema;
  schema["n_visits"] = cohort.n_visits;
  schema["features"] = json::array();
  for (const auto& s : cohort.specs) {
    json f;
    f["name"] = s.name;
    f["kind"] = kind_name(s.kind);
    if (!s.unit.empty()) f["unit"] = s.unit;
    if (!s.levels.empty()) f["levels"] = s.levels;
    schema["features"].push_back(std::move(f));
  }
  std::ofstream sout(schema_path, std::ios::binary);
  if (!sout) throw ValidationError("cannot write schema " + schema_path.string());
  sout << schema.dump(2) << "\n";

  CsvTable csv;
  csv.header = {"subject_id", "visit"};
  for (const auto& s : cohort.specs) csv.header.push_back(s.name);
  csv.header.push_back("outcome");
  for (const auto& r : cohort.rows) {
    std::vector<std::string> row{r.subject_id, std::to_string(r.visit)};
    for (std::size_t j = 0; j < cohort.specs.size(); ++j) {
      if (r.missing[j]) {
        row.emplace_back();
      } else if (cohort.specs[j].kind == FeatureKind::Categorical) {
        row.push_back(std::get<std::string>(r.values[j]));
      } else {
        row.push_back(format_double(std::get<double>(r.values[j])));
      }
    }
    row.push_back(std::to_string(r.outcome));
    csv.rows.push_back(std::move(row));
  }
  write_csv(csv_path, csv);
}

void write_descriptive_csv(const DescriptiveTable& table, const std::filesystem::path& path) {
  CsvTable csv;
  csv.header = {"feature", "kind", "level", "visit", "outcome", "n", "mean", "sd", "count",
                "percent", "degenerate"};
  for (const auto& row : table.rows) {
    for (int v = 1; v <= table.n_visits; ++v) {
      for (int s = 0; s < 2; ++s) {
        const auto& cell = row.cells[v - 1][s];
        if (row.kind == FeatureKind::Continuous) {
          csv.rows.push_back({row.feature, kind_name(row.kind), "", std::to_string(v),
                              std::to_string(s), std::to_string(cell.n),
                              cell.n > 0 ? format_double(cell.mean) : "",
                              cell.n > 0 ? format_double(cell.sd) : "", "", "",
                              cell.degenerate ? "1" : "0"});
        } else {
          for (const auto& [level, count] : cell.level_counts) {
            const double pct = cell.n > 0 ? 100.0 * count / cell.n : 0.0;
            csv.rows.push_back({row.feature, kind_name(row.kind), level, std::to_string(v),
                                std::to_string(s), std::to_string(cell.n), "", "",
                                std::to_string(count), cell.n > 0 ? format_double(pct) : "",
                                "0"});
          }
        }
      }
    }
  }
  write_csv(path, csv);
}

}  // namespace phenotyper
