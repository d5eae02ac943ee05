#include <doctest.h>

#include <set>

#include <filesystem>

#include "phenotyper/cohort.hpp"
#include "phenotyper/errors.hpp"
#include "test_support.hpp"

using namespace phenotyper;
using testsupport::CohortBuilder;

namespace {

FeatureSpec continuous(const std::string& name) {
  return {name, FeatureKind::Continuous, "", {}};
}

}  // namespace

TEST_CASE("outcome group codes follow the three-visit bit layout") {
  CHECK(assign_outcome_group({0, 0, 0}).code == 0);
  CHECK(assign_outcome_group({0, 0, 1}).code == 1);
  CHECK(assign_outcome_group({0, 1, 0}).code == 2);
  CHECK(assign_outcome_group({0, 1, 1}).code == 3);
  CHECK(assign_outcome_group({1, 0, 0}).code == 4);
  CHECK(assign_outcome_group({1, 0, 1}).code == 5);
  CHECK(assign_outcome_group({1, 1, 0}).code == 6);
  CHECK(assign_outcome_group({1, 1, 1}).code == 7);
}

TEST_CASE("outcome group coding is a bijection on {0,1}^3") {
  std::set<int> codes;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) codes.insert(assign_outcome_group({a, b, c}).code);
  CHECK(codes.size() == 8);
  CHECK(*codes.begin() == 0);
  CHECK(*codes.rbegin() == 7);
}

TEST_CASE("missing visit outcomes are rejected") {
  CHECK_THROWS_AS(assign_outcome_group({0, -1, 1}), MissingVisit);
}

TEST_CASE("incomplete subjects are excluded from group coding") {
  CohortBuilder b({continuous("x")});
  b.row("a", 1, {1.0}, 0).row("a", 2, {1.0}, 0).row("a", 3, {1.0}, 1);
  b.row("b", 1, {1.0}, 1).row("b", 2, {1.0}, 0);  // no visit 3
  const auto groups = complete_subject_groups(b.cohort);
  CHECK(groups.size() == 1);
  CHECK(groups.at("a") == 1);
}

TEST_CASE("group codes partition complete subjects") {
  CohortBuilder b({continuous("x")});
  const int patterns[4][3] = {{0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 1}};
  for (int s = 0; s < 4; ++s)
    for (int v = 1; v <= 3; ++v)
      b.row("s" + std::to_string(s), v, {0.0}, patterns[s][v - 1]);
  const auto groups = complete_subject_groups(b.cohort);
  std::map<int, int> histogram;
  for (const auto& [_, g] : groups) histogram[g]++;
  int total = 0;
  for (const auto& [_, c] : histogram) total += c;
  CHECK(total == 4);
  CHECK(histogram[0] == 1);
  CHECK(histogram[3] == 1);
  CHECK(histogram[5] == 1);
  CHECK(histogram[7] == 1);
}

TEST_CASE("summarize_by_outcome computes sample statistics per stratum") {
  CohortBuilder b({continuous("x")}, 1);
  b.row("a", 1, {2.0}, 1).row("b", 1, {4.0}, 1).row("c", 1, {10.0}, 0);
  const DescriptiveTable table = summarize_by_outcome(b.cohort);
  REQUIRE(table.rows.size() == 1);
  const DescriptiveCell& cvd = table.rows[0].cells[0][1];
  CHECK(cvd.n == 2);
  CHECK(cvd.mean == doctest::Approx(3.0));
  CHECK(cvd.sd == doctest::Approx(1.4142).epsilon(1e-4));
  CHECK_FALSE(cvd.degenerate);

  // Single-subject stratum: no dispersion, flagged.
  const DescriptiveCell& no_cvd = table.rows[0].cells[0][0];
  CHECK(no_cvd.n == 1);
  CHECK(no_cvd.sd == 0.0);
  CHECK(no_cvd.degenerate);
}

TEST_CASE("summarize stratum sizes add up to the visit row count") {
  CohortBuilder b({continuous("x")}, 2);
  b.row("a", 1, {1.0}, 0).row("b", 1, {2.0}, 1).row("c", 1, {3.0}, 0);
  b.row("a", 2, {1.0}, 1).row("b", 2, {2.0}, 1);
  const DescriptiveTable table = summarize_by_outcome(b.cohort);
  CHECK(table.stratum_sizes[0][0] + table.stratum_sizes[0][1] == 3);
  CHECK(table.stratum_sizes[1][0] + table.stratum_sizes[1][1] == 2);
}

TEST_CASE("categorical summaries count levels and handle empty strata") {
  CohortBuilder b({{"grade", FeatureKind::Categorical, "", {"hi", "lo"}}}, 1);
  b.row("a", 1, {std::string("hi")}, 0).row("b", 1, {std::string("lo")}, 0);
  const DescriptiveTable table = summarize_by_outcome(b.cohort);
  const DescriptiveCell& neg = table.rows[0].cells[0][0];
  REQUIRE(neg.level_counts.size() == 2);
  CHECK(neg.level_counts[0].second == 1);
  CHECK(neg.level_counts[1].second == 1);
  const DescriptiveCell& pos = table.rows[0].cells[0][1];
  CHECK(pos.n == 0);  // empty stratum reports n = 0
}

TEST_CASE("cohort CSV and schema round-trip") {
  CohortBuilder b({continuous("bmi"), {"sex", FeatureKind::Categorical, "", {"F", "M"}},
                   {"med", FeatureKind::Binary, "", {}}});
  b.row("s1", 1, {31.4, std::string("F"), 1.0}, 0);
  b.row("s1", 2, {0.0, std::string("M"), 0.0}, 1, {true, false, false});
  b.row("s2", 1, {28.0, std::string(), 1.0}, 0, {false, true, false});

  const auto dir = std::filesystem::temp_directory_path() / "phenotyper_cohort_io";
  std::filesystem::create_directories(dir);
  save_cohort(b.cohort, dir / "c.csv", dir / "s.json");
  const Cohort back = load_cohort(dir / "c.csv", dir / "s.json");

  REQUIRE(back.rows.size() == 3);
  CHECK(back.specs[1].levels == std::vector<std::string>{"F", "M"});
  CHECK(back.rows[0].subject_id == "s1");
  CHECK(std::get<double>(back.rows[0].values[0]) == doctest::Approx(31.4));
  CHECK(back.rows[1].missing[0]);
  CHECK(back.rows[2].missing[1]);
  CHECK(std::get<std::string>(back.rows[1].values[1]) == "M");
  CHECK(back.rows[1].outcome == 1);
}

TEST_CASE("cohort validation rejects duplicate subject-visit pairs") {
  CohortBuilder b({continuous("x")});
  b.row("a", 1, {1.0}, 0).row("a", 1, {2.0}, 0);
  CHECK_THROWS_AS(b.cohort.validate(), ValidationError);
}

TEST_CASE("cohort validation rejects out-of-range visits") {
  CohortBuilder b({continuous("x")}, 2);
  b.row("a", 3, {1.0}, 0);
  CHECK_THROWS_AS(b.cohort.validate(), ValidationError);
}
