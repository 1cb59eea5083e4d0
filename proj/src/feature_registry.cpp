#include "noterisk/feature_registry.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "noterisk/error.hpp"

namespace noterisk {

std::string_view to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::demographics: return "demographics";
    case FeatureGroup::comorbidities: return "comorbidities";
    case FeatureGroup::lab_tests: return "lab_tests";
    case FeatureGroup::sapsii: return "sapsii";
    case FeatureGroup::sofa: return "sofa";
    case FeatureGroup::other: return "other";
  }
  return "other";
}

std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::binary ? "binary" : "continuous";
}

FeatureSpec::FeatureSpec(std::vector<FeatureEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string_view> seen;
  for (const auto& e : entries_) {
    if (!seen.insert(e.name).second) {
      throw DataError("duplicate feature name '" + e.name + "'");
    }
  }
}

std::optional<std::size_t> FeatureSpec::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

bool FeatureSpec::operator==(const FeatureSpec& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.group != b.group || a.kind != b.kind) return false;
  }
  return true;
}

namespace {

std::vector<FeatureEntry> build_registry() {
  using G = FeatureGroup;
  using K = FeatureKind;
  std::vector<FeatureEntry> r;
  r.push_back({std::string(kGenderFeature), G::demographics, K::binary});
  r.push_back({std::string(kAgeFeature), G::demographics, K::continuous});

  r.push_back({"charlson_comorbidity_index", G::comorbidities, K::continuous});
  r.push_back({"charlson_age_score", G::comorbidities, K::continuous});
  for (const char* name :
       {"aids", "cerebrovascular_disease", "chronic_pulmonary_disease", "congestive_heart_failure",
        "dementia", "diabetes_without_cc", "diabetes_with_cc", "malignant_cancer",
        "metastatic_solid_tumor", "mild_liver_disease", "myocardial_infarct", "paraplegia",
        "peptic_ulcer_disease", "peripheral_vascular_disease", "renal_disease",
        "rheumatic_disease", "severe_liver_disease"}) {
    r.push_back({name, G::comorbidities, K::binary});
  }

  // Labs with repeated draws during the stay: min, max and mean.
  for (const char* lab : {"anion_gap", "bicarbonate", "chloride", "glucose", "hematocrit",
                          "potassium", "sodium", "urea_nitrogen", "wbc"}) {
    for (const char* stat : {"_min", "_max", "_mean"}) {
      r.push_back({std::string(lab) + stat, G::lab_tests, K::continuous});
    }
  }
  for (const char* lab : {"lactate", "ph", "free_calcium", "pt", "ptt", "alkaline_phosphatase",
                          "albumin"}) {
    r.push_back({std::string(lab) + "_mean", G::lab_tests, K::continuous});
  }

  for (const char* name : {"sapsii_score", "sapsii_pao2fio2_score", "sapsii_age_score",
                           "sapsii_heart_rate_score", "sapsii_probability", "sapsii_sysbp_score"}) {
    r.push_back({name, G::sapsii, K::continuous});
  }
  for (const char* name : {"sofa_temperature_score", "sofa_gcs", "sofa_pao2fio2_novent",
                           "sofa_pao2fio2_vent", "sofa_dobutamine_rate", "sofa_dopamine_rate",
                           "sofa_epinephrine_rate", "sofa_norepinephrine_rate",
                           "sofa_urine_output_24h"}) {
    r.push_back({name, G::sofa, K::continuous});
  }
  return r;
}

}  // namespace

std::span<const FeatureEntry> emr_registry() {
  static const std::vector<FeatureEntry> registry = build_registry();
  return registry;
}

const FeatureEntry* find_registry_entry(std::string_view name) {
  auto reg = emr_registry();
  auto it = std::find_if(reg.begin(), reg.end(), [&](const auto& e) { return e.name == name; });
  return it == reg.end() ? nullptr : &*it;
}

}  // namespace noterisk
