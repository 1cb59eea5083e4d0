#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "noterisk/cohort.hpp"
#include "noterisk/lasso.hpp"
#include "noterisk/llm_client.hpp"
#include "noterisk/metrics.hpp"
#include "noterisk/report.hpp"

namespace noterisk {

inline constexpr std::string_view kSoftwareVersion = "0.1.0";

struct SynthSpec {
  std::size_t n = 2000;
  std::uint64_t seed = 7;
  SynthConfig config;
};

struct RunConfig {
  // Either an on-disk cohort or a synthetic one.
  std::optional<std::filesystem::path> features_csv;
  std::optional<std::filesystem::path> notes_dir;
  bool open_schema = false;
  std::optional<SynthSpec> synth;

  LlmClientConfig llm;
  std::optional<MockMode> mock;
  std::optional<std::filesystem::path> cache_path;

  double train_fraction = 0.7;
  std::size_t cv_folds = 10;
  CvCriterion cv_criterion = CvCriterion::deviance;
  std::uint64_t seed = 42;
  std::vector<Outcome> outcomes{kAllOutcomes.begin(), kAllOutcomes.end()};
  std::vector<FeatureSet> feature_sets{kAllFeatureSets.begin(), kAllFeatureSets.end()};
  std::filesystem::path output_dir = "out";

  std::size_t lambda_count = 100;
  double tol = 1e-7;
  int max_iter = 100000;
  std::size_t divergence_top_k = 20;
  unsigned threads = 0;  // 0: hardware concurrency
  bool record_timings = false;

  // Throws ConfigError.
  void validate() const;
};

// JSON config schema (see README). Unknown keys are rejected.
RunConfig config_from_json(std::string_view text);
// Snapshot used in the manifest; output_dir is omitted so the snapshot does
// not depend on where a run is written.
std::string config_to_json(const RunConfig& config);

inline constexpr std::array<std::string_view, 3> kGptColumns = {
    "gpt_risk_death", "gpt_risk_readmit", "gpt_overall_health"};

// Column names of the EMR block for a cohort: gender_male, age_at_discharge,
// then the cohort's FeatureSpec columns.
std::vector<std::string> emr_columns(const FeatureSpec& spec);

// Design matrix for one outcome and feature set. Records without answers are
// skipped for gpt and both; the cohort must already be imputed.
DesignMatrix build_design(const Cohort& cohort, const std::map<std::string, GptAnswers>& answers,
                          Outcome outcome, FeatureSet feature_set,
                          std::vector<std::string>* row_ids = nullptr);

std::map<std::string, std::map<std::string, std::string>> subgroup_assignment(const Cohort& cohort);

struct CellResult {
  Outcome outcome;
  FeatureSet feature_set;
  FittedModel model;
  CvResult cv;
  ScoredSet test_scores;
  EvalReport report;
  std::size_t n_train = 0;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  std::vector<EvalReport> reports;
  std::vector<std::pair<Outcome, std::vector<CalibrationBin>>> calibration;
  std::vector<std::pair<Outcome, std::vector<ScatterPoint>>> scatter;
  std::vector<std::pair<Outcome, DivergenceReport>> divergence;
  std::vector<std::pair<Outcome, double>> emr_both_correlation;
  std::string manifest_json;
  Cohort test;  // imputed test split, for prediction files
};

struct FeaturizedCohort {
  Cohort cohort;
  FeaturizationResult features;
};

// Loads or synthesizes the cohort. Synthetic cohorts are written under
// output_dir/cohort and read back through load_cohort.
Cohort obtain_cohort(const RunConfig& config);

// Backend, cache and client as configured.
std::unique_ptr<LlmClient> make_client(const RunConfig& config);

// Modeling and evaluation on an already-split cohort. Imputation statistics,
// standardization and lambda selection come from `train` only.
ExperimentResult run_on_split(const RunConfig& config, const Cohort& train, const Cohort& test,
                              const FeaturizationResult& features);

// Writes the output tree: manifest.json, models/, predictions/, reports,
// tables, calibration, scatter and divergence files.
void write_artifacts(const RunConfig& config, const ExperimentResult& result);

// load/synthesize -> featurize -> split -> impute -> fit/evaluate -> write.
ExperimentResult run_experiment(const RunConfig& config);

// Rebuilds reports and tables from output_dir/predictions/*.csv.
std::vector<EvalReport> rebuild_reports(const std::filesystem::path& output_dir);

}  // namespace noterisk
