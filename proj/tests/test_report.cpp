#include "doctest.h"
#include "json.hpp"
#include "noterisk/csv.hpp"
#include "noterisk/error.hpp"
#include "noterisk/report.hpp"
#include "oracles.hpp"
#include "reference_tables.hpp"

using namespace noterisk;

namespace {

const std::vector<Outcome> kOutcomes(kAllOutcomes.begin(), kAllOutcomes.end());
const std::vector<FeatureSet> kSets(kAllFeatureSets.begin(), kAllFeatureSets.end());

}  // namespace

TEST_CASE("table1 reproduces the 3x3 AUC layout") {
  CHECK(table1_csv(reference::reports(), kOutcomes, kSets) ==
        "outcome,emr,gpt,both\n"
        "mortality_90d,0.843,0.864,0.884\n"
        "mortality_1y,0.829,0.866,0.886\n"
        "readmit_90d,0.666,0.711,0.72\n");
}

TEST_CASE("table2 has one row per outcome and fraction") {
  auto t = parse_csv(table2_csv(reference::reports(), kOutcomes, kSets));
  CHECK(t.header == CsvRow{"outcome", "fraction", "emr", "gpt", "both"});
  REQUIRE(t.rows.size() == 12);
  CHECK(t.rows[6] == CsvRow{"mortality_1y", "0.1", "0.43", "0.52", "0.55"});
}

TEST_CASE("emit_tables writes every table and a summary") {
  oracle::TempDir tmp("report");
  emit_tables(reference::reports(), kOutcomes, kSets, tmp.path);
  for (const char* f : {"table1.csv", "table2.csv", "subgroups.csv", "summary.json"}) {
    CHECK(std::filesystem::exists(tmp.path / f));
  }
  auto summary = nlohmann::json::parse(read_file(tmp.path / "summary.json"));
  CHECK(std::abs(summary.at("avg_rel_ppv_gain_decile").get<double>() * 100 - 29.8) <= 0.1);
  CHECK(std::abs(summary.at("avg_auc_gain_pp").get<double>() - 5.1) <= 0.05);
}

TEST_CASE("incomplete or empty grids are rejected") {
  auto r = reference::reports();
  r.erase(r.begin() + 4);  // mortality_1y / gpt
  r.erase(r.begin());      // mortality_90d / emr
  oracle::TempDir tmp("report-err");
  CHECK_THROWS_WITH_AS(emit_tables(r, kOutcomes, kSets, tmp.path),
                       doctest::Contains("mortality_90d/emr, mortality_1y/gpt"), DataError);
  CHECK_THROWS_AS(emit_tables({}, kOutcomes, kSets, tmp.path), DataError);
  // A gpt-only grid has no summary deltas.
  std::vector<EvalReport> gpt;
  for (const auto& x : reference::reports()) {
    if (x.feature_set == FeatureSet::gpt) gpt.push_back(x);
  }
  emit_tables(gpt, kOutcomes, {FeatureSet::gpt}, tmp.path);
  CHECK(nlohmann::json::parse(read_file(tmp.path / "summary.json")).at("avg_auc_gain_pp").is_null());
}

TEST_CASE("subgroup table reports differences and undefined groups") {
  auto r = reference::reports();
  for (auto& x : r) {
    x.subgroup_auc["gender:female"] = 0.845;
    x.subgroup_auc["gender:male"] = 0.876;
    x.subgroup_auc["age:under_65"] = std::nullopt;
    x.subgroup_auc["age:65_plus"] = 0.8;
  }
  auto t = parse_csv(subgroups_csv(r, kOutcomes, kSets));
  CHECK(t.header == CsvRow{"dimension", "outcome", "feature_set", "group_a", "auc_a", "group_b", "auc_b",
                           "difference_pp"});
  REQUIRE(t.rows.size() == 18);
  CHECK(t.rows[0][0] == "gender");
  CHECK(*parse_real(t.rows[0][7]) == doctest::Approx(-3.1).epsilon(1e-9));
  CHECK(t.rows[9][0] == "age");
  CHECK(t.rows[9][4] == "undefined");
  CHECK(t.rows[9][7] == "undefined");
}

TEST_CASE("report JSON and CSV rows") {
  EvalReport r = reference::reports()[0];
  r.error_rate = 0.125;
  r.subgroup_auc["gender:female"] = std::nullopt;
  auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j.at("outcome") == "mortality_90d");
  CHECK(j.at("auc") == 0.843);
  CHECK(j.at("ppv_at").at("0.025") == 0.43);
  CHECK(j.at("subgroup_auc").at("gender:female") == "undefined");
  CHECK(report_csv_header() == "outcome,feature_set,auc,error_rate,ppv_0.025,ppv_0.05,ppv_0.1,ppv_0.2\n");
  CHECK(report_csv_row(r) == "mortality_90d,emr,0.843,0.125,0.43,0.31,0.26,0.18\n");
}

TEST_CASE("plot data files") {
  CHECK(calibration_csv({{Outcome::mortality_1y, {{10, 4, 0.25}, {80, 2, 1.0}}}}) ==
        "outcome,score,n,event_rate\nmortality_1y,10,4,0.25\nmortality_1y,80,2,1\n");
  CHECK(scatter_csv({{Outcome::mortality_1y, {{"a", 0.1, 0.2}}}}) ==
        "outcome,patient_id,emr_score,both_score\nmortality_1y,a,0.1,0.2\n");
  DivergenceReport d;
  d.largest_increase = {{"a", 0.1, 0.6, 0.5}};
  d.largest_decrease = {{"b", 0.5, 0.25, -0.25}};
  CHECK(divergence_csv({{Outcome::mortality_1y, d}}) ==
        "outcome,direction,rank,patient_id,score_emr,score_both,delta\n"
        "mortality_1y,increase,1,a,0.1,0.6,0.5\n"
        "mortality_1y,decrease,1,b,0.5,0.25,-0.25\n");
}
