#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace phenotyper {

enum class FeatureKind { Continuous, Categorical, Binary };

std::string kind_name(FeatureKind k);
FeatureKind kind_from_name(const std::string& s);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  std::string unit;                 // optional, continuous only
  std::vector<std::string> levels;  // categorical only, as declared
};

// A cell is a number for continuous/binary features and a level label for
// categoricals. Missing cells are tracked in the observation mask, never by
// sentinel values, so categorical columns can be missing too.
using CellValue = std::variant<double, std::string>;

struct Observation {
  std::string subject_id;
  int visit = 0;
  std::vector<CellValue> values;
  std::vector<bool> missing;
  int outcome = 0;  // per-visit event indicator, 0/1
};

struct Cohort {
  std::vector<FeatureSpec> specs;
  std::vector<Observation> rows;
  int n_visits = 1;

  int feature_index(const std::string& name) const;  // -1 when absent
  void validate() const;
};

// Table-1-style coding of a subject's outcome triple across visits 1-3:
// code = 4*o1 + 2*o2 + o3 (visit 1 is the most significant bit).
struct OutcomeGroup {
  int code = 0;
};

OutcomeGroup assign_outcome_group(const std::array<int, 3>& outcomes_by_visit);

// Group code per subject with all of visits 1-3 present; incomplete subjects
// are excluded.
std::map<std::string, int> complete_subject_groups(const Cohort& cohort);

// Per-visit, per-outcome descriptive statistics in Table-2 shape.
struct DescriptiveCell {
  int n = 0;  // rows in the stratum with this feature observed
  double mean = 0.0;
  double sd = 0.0;
  bool degenerate = false;  // n == 1: no dispersion, sd reported as 0
  std::vector<std::pair<std::string, int>> level_counts;
};

struct DescriptiveRow {
  std::string feature;
  FeatureKind kind;
  // cells[visit-1][stratum], stratum 0 = outcome absent, 1 = present
  std::vector<std::array<DescriptiveCell, 2>> cells;
};

struct DescriptiveTable {
  int n_visits = 0;
  std::vector<std::array<int, 2>> stratum_sizes;  // per visit
  std::vector<DescriptiveRow> rows;
};

DescriptiveTable summarize_by_outcome(const Cohort& cohort);

// Long CSV: subject_id,visit,<features...>,outcome with a JSON sidecar schema.
Cohort load_cohort(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path);
void save_cohort(const Cohort& cohort, const std::filesystem::path& csv_path,
                 const std::filesystem::path& schema_path);

void write_descriptive_csv(const DescriptiveTable& table, const std::filesystem::path& path);

}  // namespace phenotyper
