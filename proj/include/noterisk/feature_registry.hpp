#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace noterisk {

enum class FeatureGroup { demographics, comorbidities, lab_tests, sapsii, sofa, other };
enum class FeatureKind { binary, continuous };

std::string_view to_string(FeatureGroup group);
std::string_view to_string(FeatureKind kind);

struct FeatureEntry {
  std::string name;
  FeatureGroup group;
  FeatureKind kind;
};

// Ordered list of EMR feature columns. The order is the canonical column order
// used for every design matrix built from a cohort.
class FeatureSpec {
 public:
  FeatureSpec() = default;
  // Throws DataError on duplicate names.
  explicit FeatureSpec(std::vector<FeatureEntry> entries);

  const std::vector<FeatureEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  const FeatureEntry& at(std::size_t i) const { return entries_.at(i); }

  bool operator==(const FeatureSpec& other) const;

 private:
  std::vector<FeatureEntry> entries_;
};

// Names of the two demographic columns. They live on PatientRecord directly
// (gender, age_at_discharge) and are prepended to every EMR design matrix.
inline constexpr std::string_view kGenderFeature = "gender_male";
inline constexpr std::string_view kAgeFeature = "age_at_discharge";

// The 70-entry EMR registry: 2 demographics, 19 comorbidity items, 34 lab
// summaries, 6 SAPS-II and 9 SOFA items. Nine labs contribute min/max/mean,
// the remaining seven contribute a stay mean only.
std::span<const FeatureEntry> emr_registry();

// Registry lookup by column name.
const FeatureEntry* find_registry_entry(std::string_view name);

}  // namespace noterisk
