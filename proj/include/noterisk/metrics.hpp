#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "noterisk/cohort.hpp"
#include "noterisk/prompt.hpp"

namespace noterisk {

struct ScoredEntry {
  std::string patient_id;
  double score = 0.0;
  bool label = false;
};

// Scored patients held in canonical order: score descending, then
// patient_id ascending. Ids are unique and scores finite in [0, 1].
class ScoredSet {
 public:
  ScoredSet() = default;
  // Throws DataError on a duplicate id or an out-of-range score.
  explicit ScoredSet(std::vector<ScoredEntry> entries);

  const std::vector<ScoredEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t positives() const;
  double prevalence() const;
  const ScoredEntry* find(const std::string& patient_id) const;

 private:
  std::vector<ScoredEntry> entries_;
};

// Mann-Whitney AUC with ties counted as one half. Throws DataError unless
// both classes are present.
double auc(const ScoredSet& s);

// Fraction of entries where (score >= threshold) disagrees with the label.
double error_rate(const ScoredSet& s, double threshold = 0.5);

// Number of entries flagged by the top `fraction` cutoff: ceil(fraction * n),
// at least 1, at most n.
std::size_t top_count(std::size_t n, double fraction);

// Positives among the first top_count(n, fraction) entries in canonical order.
double ppv_at_top(const ScoredSet& s, double fraction);

struct SubgroupAuc {
  std::vector<std::string> groups;                 // evaluation order
  std::map<std::string, std::optional<double>> auc;  // nullopt: single-class group
  struct Difference {
    std::string a;
    std::string b;
    std::optional<double> pp;  // (AUC_a - AUC_b) * 100
  };
  std::vector<Difference> differences;  // every pair (a before b in `groups`)
};

// Percentage-point difference between two AUCs given as fractions.
double difference_pp(double auc_a, double auc_b);

// AUC restricted to each group. Groups come from `order` when given, else
// sorted by name. Throws DataError if a patient has no group.
SubgroupAuc subgroup_auc(const ScoredSet& s, const std::map<std::string, std::string>& groups,
                         const std::vector<std::string>& order = {});

struct CalibrationBin {
  int gpt_score = 0;
  std::size_t n = 0;
  double event_rate = 0.0;
};

// Groups patients by the exact risk-of-death answer; bins ascend by score.
// Throws DataError when the two maps have different key sets.
std::vector<CalibrationBin> risk_bin_calibration(
    const std::map<std::string, GptAnswers>& answers, const std::map<std::string, bool>& labels);

// Pearson correlation of scores matched by patient_id.
double score_correlation(const ScoredSet& a, const ScoredSet& b);

struct DivergenceEntry {
  std::string patient_id;
  double score_a = 0.0;
  double score_b = 0.0;
  double delta = 0.0;  // score_b - score_a
};

struct DivergenceReport {
  std::vector<DivergenceEntry> largest_increase;
  std::vector<DivergenceEntry> largest_decrease;
};

// Patients whose score moves most between model a and model b. top_k is
// clamped to n; ties break by patient_id ascending.
DivergenceReport divergence_report(const ScoredSet& a, const ScoredSet& b, std::size_t top_k);

enum class FeatureSet { emr, gpt, both };
inline constexpr std::array<FeatureSet, 3> kAllFeatureSets = {FeatureSet::emr, FeatureSet::gpt,
                                                             FeatureSet::both};
std::string_view to_string(FeatureSet set);
FeatureSet parse_feature_set(std::string_view name);

inline constexpr std::array<double, 4> kPpvFractions = {0.025, 0.05, 0.10, 0.20};

struct EvalReport {
  Outcome outcome = Outcome::mortality_1y;
  FeatureSet feature_set = FeatureSet::emr;
  double auc = 0.0;
  double error_rate = 0.0;
  std::map<double, double> ppv_at;  // fraction -> PPV
  std::map<std::string, std::optional<double>> subgroup_auc;
};

// Full metric suite for one model's test-set scores. `groups` maps each
// dimension name (e.g. "gender") to a patient_id -> group assignment.
EvalReport evaluate(Outcome outcome, FeatureSet feature_set, const ScoredSet& s,
                    const std::map<std::string, std::map<std::string, std::string>>& groups = {});

struct SummaryDeltas {
  double avg_auc_gain_pp = 0.0;          // mean of (AUC_both - AUC_emr) * 100
  double avg_rel_ppv_gain_decile = 0.0;  // mean of (PPV_both - PPV_emr) / PPV_emr at 10%
};

// Averages over every outcome that has an emr report. Throws DataError naming
// an outcome whose emr or both report is missing.
SummaryDeltas compute_summary_deltas(const std::vector<EvalReport>& reports);

}  // namespace noterisk
