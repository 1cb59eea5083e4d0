#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "noterisk/metrics.hpp"

namespace noterisk {

// Subgroup dimensions and the (a, b) order used for a - b differences.
struct SubgroupDimension {
  std::string name;
  std::string group_a;
  std::string group_b;
};
inline const std::vector<SubgroupDimension>& subgroup_dimensions() {
  static const std::vector<SubgroupDimension> dims = {{"gender", "female", "male"},
                                                      {"age", "under_65", "65_plus"}};
  return dims;
}

std::string report_to_json(const EvalReport& report);
std::string reports_to_json(const std::vector<EvalReport>& reports);

// outcome,feature_set,auc,error_rate,ppv_0.025,ppv_0.05,ppv_0.1,ppv_0.2
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);

// Writes table1.csv, table2.csv, subgroups.csv and summary.json into `dir`.
// Every (outcome, feature set) cell of the requested grid must have a report;
// otherwise DataError lists the missing cells. summary.json carries nulls when
// the grid lacks the emr or both column.
void emit_tables(const std::vector<EvalReport>& reports, const std::vector<Outcome>& outcomes,
                 const std::vector<FeatureSet>& feature_sets, const std::filesystem::path& dir);

std::string table1_csv(const std::vector<EvalReport>& reports, const std::vector<Outcome>& outcomes,
                       const std::vector<FeatureSet>& feature_sets);
std::string table2_csv(const std::vector<EvalReport>& reports, const std::vector<Outcome>& outcomes,
                       const std::vector<FeatureSet>& feature_sets);
std::string subgroups_csv(const std::vector<EvalReport>& reports,
                          const std::vector<Outcome>& outcomes,
                          const std::vector<FeatureSet>& feature_sets);
std::string summary_json(const std::vector<EvalReport>& reports);

std::string calibration_csv(const std::vector<std::pair<Outcome, std::vector<CalibrationBin>>>& bins);

struct ScatterPoint {
  std::string patient_id;
  double emr_score;
  double both_score;
};
std::string scatter_csv(const std::vector<std::pair<Outcome, std::vector<ScatterPoint>>>& points);

std::string divergence_csv(const std::vector<std::pair<Outcome, DivergenceReport>>& reports);

}  // namespace noterisk
