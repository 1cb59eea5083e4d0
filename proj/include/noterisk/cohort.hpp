#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "noterisk/feature_registry.hpp"

namespace noterisk {

enum class Gender { female, male };

enum class Outcome { mortality_90d, mortality_1y, readmit_90d };
inline constexpr std::array<Outcome, 3> kAllOutcomes = {
    Outcome::mortality_90d, Outcome::mortality_1y, Outcome::readmit_90d};

std::string_view to_string(Outcome outcome);
// Throws ConfigError for an unknown name.
Outcome parse_outcome(std::string_view name);

struct OutcomeSet {
  bool mortality_90d = false;
  bool mortality_1y = false;
  bool readmit_90d = false;

  bool get(Outcome outcome) const;
  void set(Outcome outcome, bool value);
  // 90-day death implies death within the year.
  bool consistent() const { return !mortality_90d || mortality_1y; }
  bool operator==(const OutcomeSet&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  Gender gender = Gender::female;
  int age_at_discharge = 0;
  // Aligned with the owning cohort's FeatureSpec; nullopt is a missing cell.
  std::vector<std::optional<double>> emr_features;
  std::string note_file;
  std::string note_text;
  OutcomeSet outcomes;

  bool operator==(const PatientRecord&) const = default;
};

struct Cohort {
  FeatureSpec spec;
  std::vector<PatientRecord> records;

  // Checks id uniqueness, feature vector width and the outcome implication.
  void validate() const;
  std::optional<double> feature(std::size_t record, std::string_view name) const;
};

struct StayAggregate {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

// Collapses repeated in-stay observations into min, max and mean.
StayAggregate aggregate_stay(std::span<const double> observations);

struct LoadOptions {
  // Accept columns not in the EMR registry (group `other`, kind inferred).
  bool open_schema = false;
};

// Reads the features CSV and one note file per row from `notes_dir`.
Cohort load_cohort(const std::filesystem::path& features_csv,
                   const std::filesystem::path& notes_dir, const LoadOptions& options = {});

// Writes `cohort` in the same CSV + notes directory layout load_cohort reads.
void write_cohort(const Cohort& cohort, const std::filesystem::path& features_csv,
                  const std::filesystem::path& notes_dir);

// Fills missing cells of `apply_to` from `train`: continuous features get the
// training median, binary features get 0.
Cohort impute_missing(const Cohort& train, const Cohort& apply_to);

// Seeded shuffle, then the first floor(n * train_fraction) records train.
std::pair<Cohort, Cohort> split_train_test(const Cohort& cohort, double train_fraction,
                                           std::uint64_t seed);

struct OutcomeCoefficients {
  double intercept = 0.0;
  double emr_scale = 0.0;   // multiplies the tabular severity
  double note_scale = 0.0;  // multiplies the note-only severity
};

struct SynthConfig {
  // Indexed by Outcome. 1-year risk is floored at the 90-day risk so the
  // implication between the two mortality outcomes always holds.
  std::array<OutcomeCoefficients, 3> outcomes = {{
      {-2.4, 0.9, 1.5},  // mortality_90d
      {-1.5, 0.9, 1.7},  // mortality_1y
      {-2.6, 0.5, 0.8},  // readmit_90d
  }};
  // Probability that each continuous EMR cell is left empty.
  double missing_rate = 0.02;
};

inline constexpr std::string_view kSeverityMarker = "SYNTH-SEVERITY:";

// Deterministic synthetic cohort: 10 continuous labs, 5 binary comorbidities,
// gender and age; a note-only severity u in 1..100 carried by a single
// `SYNTH-SEVERITY: u` line in the note.
Cohort generate_synthetic(std::size_t n, std::uint64_t seed, const SynthConfig& config = {});

// Feature names used by generate_synthetic, in column order.
std::vector<std::string> synthetic_feature_names();

}  // namespace noterisk
