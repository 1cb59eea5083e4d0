#include "noterisk/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <unordered_set>

#include "noterisk/csv.hpp"
#include "noterisk/error.hpp"

namespace noterisk {

namespace fs = std::filesystem;

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::mortality_90d: return "mortality_90d";
    case Outcome::mortality_1y: return "mortality_1y";
    case Outcome::readmit_90d: return "readmit_90d";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view name) {
  for (Outcome o : kAllOutcomes) {
    if (to_string(o) == name) return o;
  }
  throw ConfigError("unknown outcome '" + std::string(name) + "'");
}

bool OutcomeSet::get(Outcome outcome) const {
  switch (outcome) {
    case Outcome::mortality_90d: return mortality_90d;
    case Outcome::mortality_1y: return mortality_1y;
    case Outcome::readmit_90d: return readmit_90d;
  }
  return false;
}

void OutcomeSet::set(Outcome outcome, bool value) {
  switch (outcome) {
    case Outcome::mortality_90d: mortality_90d = value; break;
    case Outcome::mortality_1y: mortality_1y = value; break;
    case Outcome::readmit_90d: readmit_90d = value; break;
  }
}

void Cohort::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.patient_id).second) {
      throw DataError("duplicate patient_id '" + r.patient_id + "'");
    }
    if (r.emr_features.size() != spec.size()) {
      throw DataError("patient '" + r.patient_id + "' has " +
                      std::to_string(r.emr_features.size()) + " features, spec has " +
                      std::to_string(spec.size()));
    }
    if (!r.outcomes.consistent()) {
      throw DataError("patient '" + r.patient_id + "': mortality_90d without mortality_1y");
    }
  }
}

std::optional<double> Cohort::feature(std::size_t record, std::string_view name) const {
  auto idx = spec.index_of(name);
  if (!idx) throw DataError("unknown feature '" + std::string(name) + "'");
  return records.at(record).emr_features.at(*idx);
}

StayAggregate aggregate_stay(std::span<const double> observations) {
  if (observations.empty()) throw DataError("no observations");
  StayAggregate agg{observations.front(), observations.front(), 0.0};
  double sum = 0.0;
  for (double v : observations) {
    if (!std::isfinite(v)) throw DataError("non-finite observation");
    agg.min = std::min(agg.min, v);
    agg.max = std::max(agg.max, v);
    sum += v;
  }
  // Rounding can push a mean of identical values a hair outside [min, max].
  agg.mean = std::clamp(sum / static_cast<double>(observations.size()), agg.min, agg.max);
  return agg;
}

namespace {

constexpr std::array<std::string_view, 7> kRequiredColumns = {
    "patient_id", "gender", "age_at_discharge", "note_file",
    "mortality_90d", "mortality_1y", "readmit_90d"};

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

std::string where(std::size_t row, std::string_view column) {
  return "row " + std::to_string(row + 1) + ", column '" + std::string(column) + "'";
}

bool parse_flag(const std::string& cell, std::size_t row, std::string_view column) {
  if (cell == "0") return false;
  if (cell == "1") return true;
  throw DataError(where(row, column) + ": expected 0 or 1, got '" + cell + "'");
}

}  // namespace

Cohort load_cohort(const fs::path& features_csv, const fs::path& notes_dir,
                   const LoadOptions& options) {
  CsvTable table;
  try {
    table = read_csv(features_csv);
  } catch (const DataError& e) {
    throw DataError(features_csv.string() + ": " + e.what());
  }

  std::map<std::string_view, std::size_t> required;
  std::vector<std::size_t> feature_cols;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (!seen.insert(name).second) throw DataError("duplicate column '" + name + "' in header");
    auto req = std::find(kRequiredColumns.begin(), kRequiredColumns.end(), name);
    if (req != kRequiredColumns.end()) {
      required[*req] = c;
    } else {
      feature_cols.push_back(c);
    }
  }
  for (auto name : kRequiredColumns) {
    if (!required.contains(name)) {
      throw DataError("missing required column '" + std::string(name) + "'");
    }
  }

  std::vector<FeatureEntry> entries;
  for (std::size_t c : feature_cols) {
    const auto& name = table.header[c];
    if (name == kGenderFeature) {
      throw DataError("column '" + name + "' is reserved; gender comes from the 'gender' column");
    }
    if (const auto* entry = find_registry_entry(name)) {
      entries.push_back(*entry);
    } else if (options.open_schema) {
      bool binary = true;
      for (const auto& row : table.rows) {
        const auto& cell = row[c];
        if (!cell.empty() && cell != "0" && cell != "1") {
          binary = false;
          break;
        }
      }
      entries.push_back({name, FeatureGroup::other,
                         binary ? FeatureKind::binary : FeatureKind::continuous});
    } else {
      throw DataError("unknown feature column '" + name + "'");
    }
  }

  Cohort cohort;
  cohort.spec = FeatureSpec(std::move(entries));
  std::unordered_set<std::string> ids;
  cohort.records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto cell = [&](std::string_view col) -> const std::string& { return row[required.at(col)]; };

    PatientRecord rec;
    rec.patient_id = cell("patient_id");
    if (rec.patient_id.empty()) throw DataError(where(r, "patient_id") + ": empty id");
    if (!ids.insert(rec.patient_id).second) {
      throw DataError(where(r, "patient_id") + ": duplicate patient_id '" + rec.patient_id + "'");
    }

    const auto& g = cell("gender");
    if (g == "F") {
      rec.gender = Gender::female;
    } else if (g == "M") {
      rec.gender = Gender::male;
    } else {
      throw DataError(where(r, "gender") + ": expected F or M, got '" + g + "'");
    }

    const auto& age = cell("age_at_discharge");
    auto [ptr, ec] = std::from_chars(age.data(), age.data() + age.size(), rec.age_at_discharge);
    if (ec != std::errc() || ptr != age.data() + age.size() || rec.age_at_discharge < 0) {
      throw DataError(where(r, "age_at_discharge") + ": expected integer >= 0, got '" + age + "'");
    }

    rec.outcomes.mortality_90d = parse_flag(cell("mortality_90d"), r, "mortality_90d");
    rec.outcomes.mortality_1y = parse_flag(cell("mortality_1y"), r, "mortality_1y");
    rec.outcomes.readmit_90d = parse_flag(cell("readmit_90d"), r, "readmit_90d");
    if (!rec.outcomes.consistent()) {
      throw DataError("row " + std::to_string(r + 1) + ": mortality_90d=1 requires mortality_1y=1");
    }

    rec.emr_features.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const auto& text = row[feature_cols[k]];
      const auto& entry = cohort.spec.at(k);
      if (text.empty()) {
        rec.emr_features.emplace_back(std::nullopt);
        continue;
      }
      auto value = parse_real(text);
      if (!value) throw DataError(where(r, entry.name) + ": not a finite number '" + text + "'");
      if (entry.kind == FeatureKind::binary && *value != 0.0 && *value != 1.0) {
        throw DataError(where(r, entry.name) + ": binary feature must be 0 or 1");
      }
      rec.emr_features.emplace_back(*value);
    }

    rec.note_file = cell("note_file");
    fs::path note_path = notes_dir / rec.note_file;
    if (rec.note_file.empty() || !fs::is_regular_file(note_path)) {
      throw DataError("row " + std::to_string(r + 1) + ": note file not found: " +
                      note_path.string());
    }
    rec.note_text = read_file(note_path);
    if (!valid_utf8(rec.note_text)) {
      throw DataError("row " + std::to_string(r + 1) + ": note file is not valid UTF-8: " +
                      note_path.string());
    }
    cohort.records.push_back(std::move(rec));
  }
  return cohort;
}

void write_cohort(const Cohort& cohort, const fs::path& features_csv, const fs::path& notes_dir) {
  std::string out;
  CsvRow header(kRequiredColumns.begin(), kRequiredColumns.end());
  for (const auto& e : cohort.spec.entries()) header.push_back(e.name);
  out += csv_line(header);

  fs::create_directories(notes_dir);
  for (const auto& r : cohort.records) {
    std::string note_file = r.note_file.empty() ? r.patient_id + ".txt" : r.note_file;
    CsvRow row = {r.patient_id,
                  r.gender == Gender::female ? "F" : "M",
                  std::to_string(r.age_at_discharge),
                  note_file,
                  r.outcomes.mortality_90d ? "1" : "0",
                  r.outcomes.mortality_1y ? "1" : "0",
                  r.outcomes.readmit_90d ? "1" : "0"};
    for (const auto& v : r.emr_features) row.push_back(v ? format_real(*v) : std::string());
    out += csv_line(row);
    write_file(notes_dir / note_file, r.note_text);
  }
  write_file(features_csv, out);
}

Cohort impute_missing(const Cohort& train, const Cohort& apply_to) {
  if (!(train.spec == apply_to.spec)) {
    throw DataError("impute_missing: cohorts have different feature specs");
  }
  const auto& spec = train.spec;
  std::vector<double> fill(spec.size(), 0.0);
  for (std::size_t j = 0; j < spec.size(); ++j) {
    if (spec.at(j).kind == FeatureKind::binary) continue;
    std::vector<double> observed;
    for (const auto& r : train.records) {
      if (r.emr_features[j]) observed.push_back(*r.emr_features[j]);
    }
    if (observed.empty()) throw DataError("no observed values for " + spec.at(j).name);
    std::sort(observed.begin(), observed.end());
    std::size_t m = observed.size();
    fill[j] = m % 2 ? observed[m / 2] : 0.5 * (observed[m / 2 - 1] + observed[m / 2]);
  }

  Cohort out = apply_to;
  for (auto& r : out.records) {
    for (std::size_t j = 0; j < spec.size(); ++j) {
      if (!r.emr_features[j]) r.emr_features[j] = fill[j];
    }
  }
  return out;
}

std::pair<Cohort, Cohort> split_train_test(const Cohort& cohort, double train_fraction,
                                           std::uint64_t seed) {
  if (cohort.records.empty()) throw DataError("split_train_test: empty cohort");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(cohort.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(order.size()) * train_fraction));
  Cohort train{cohort.spec, {}};
  Cohort test{cohort.spec, {}};
  train.records.reserve(n_train);
  test.records.reserve(order.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).records.push_back(cohort.records[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

namespace {

struct SynthLab {
  const char* name;
  double mean;
  double sd;
  double weight;  // contribution of the standardized value to tabular severity
};

constexpr std::array<SynthLab, 10> kSynthLabs = {{
    {"urea_nitrogen_mean", 28.0, 12.0, 0.55},
    {"sodium_mean", 138.5, 3.5, -0.35},
    {"potassium_mean", 4.2, 0.45, 0.0},
    {"glucose_mean", 135.0, 35.0, 0.0},
    {"hematocrit_mean", 31.0, 5.0, -0.40},
    {"wbc_mean", 10.5, 3.5, 0.30},
    {"anion_gap_mean", 13.5, 2.8, 0.25},
    {"bicarbonate_mean", 24.0, 3.2, 0.0},
    {"lactate_mean", 1.9, 0.8, 0.35},
    {"sapsii_score", 36.0, 11.0, 0.45},
}};

struct SynthFlag {
  const char* name;
  double prevalence;
  double weight;
};

constexpr std::array<SynthFlag, 5> kSynthFlags = {{
    {"congestive_heart_failure", 0.40, 0.45},
    {"renal_disease", 0.25, 0.40},
    {"malignant_cancer", 0.10, 0.70},
    {"chronic_pulmonary_disease", 0.20, 0.0},
    {"diabetes_with_cc", 0.15, 0.0},
}};

constexpr double kAgeWeight = 0.35;  // per 15 years above 65

constexpr std::array<const char*, 12> kFiller = {{
    "Patient was admitted for evaluation and management of cardiac symptoms.",
    "Hospital course was notable for close hemodynamic monitoring.",
    "Medications were reconciled prior to discharge.",
    "The patient tolerated a regular diet at the time of discharge.",
    "Follow-up with cardiology was arranged within two weeks.",
    "Telemetry was reviewed daily by the primary team.",
    "Family was updated on the plan of care throughout the stay.",
    "Physical therapy evaluated the patient before discharge.",
    "Laboratory values were trended and discussed on rounds.",
    "Discharge instructions were reviewed with the patient.",
    "Vital signs were stable on the day of discharge.",
    "Pain was controlled with oral medications.",
}};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<std::string> synthetic_feature_names() {
  std::vector<std::string> names;
  for (const auto& lab : kSynthLabs) names.emplace_back(lab.name);
  for (const auto& flag : kSynthFlags) names.emplace_back(flag.name);
  return names;
}

Cohort generate_synthetic(std::size_t n, std::uint64_t seed, const SynthConfig& config) {
  if (n == 0) throw ConfigError("generate_synthetic: n must be >= 1");
  std::vector<FeatureEntry> entries;
  for (const auto& name : synthetic_feature_names()) entries.push_back(*find_registry_entry(name));
  Cohort cohort{FeatureSpec(std::move(entries)), {}};
  cohort.records.reserve(n);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> age_dist(40, 90);
  std::uniform_int_distribution<std::size_t> filler_pick(0, kFiller.size() - 1);
  std::uniform_int_distribution<int> filler_count(2, 5);

  const std::size_t width = std::to_string(n).size();
  for (std::size_t i = 0; i < n; ++i) {
    PatientRecord rec;
    std::string idx = std::to_string(i + 1);
    rec.patient_id = "synth-" + std::string(width - idx.size(), '0') + idx;
    rec.note_file = rec.patient_id + ".txt";
    rec.gender = unit(rng) < 0.45 ? Gender::female : Gender::male;
    rec.age_at_discharge = age_dist(rng);

    double emr_severity = kAgeWeight * (rec.age_at_discharge - 65) / 15.0;
    for (const auto& lab : kSynthLabs) {
      double z = normal(rng);
      bool missing = unit(rng) < config.missing_rate;
      emr_severity += lab.weight * z;
      double value = std::round((lab.mean + lab.sd * z) * 100.0) / 100.0;
      rec.emr_features.emplace_back(missing ? std::nullopt : std::optional<double>(value));
    }
    for (const auto& flag : kSynthFlags) {
      bool on = unit(rng) < flag.prevalence;
      emr_severity += flag.weight * (on ? 1.0 : 0.0);
      rec.emr_features.emplace_back(on ? 1.0 : 0.0);
    }

    int u = static_cast<int>(std::clamp(std::lround(50.0 + 18.0 * normal(rng)), 1L, 100L));
    double note_severity = (u - 50) / 18.0;

    std::array<double, 3> prob{};
    for (Outcome o : kAllOutcomes) {
      const auto& c = config.outcomes[static_cast<std::size_t>(o)];
      prob[static_cast<std::size_t>(o)] =
          logistic(c.intercept + c.emr_scale * emr_severity + c.note_scale * note_severity);
    }
    double p90 = prob[static_cast<std::size_t>(Outcome::mortality_90d)];
    double p1y = std::max(prob[static_cast<std::size_t>(Outcome::mortality_1y)], p90);
    double u_death = unit(rng);
    double u_readmit = unit(rng);
    rec.outcomes.mortality_90d = u_death < p90;
    rec.outcomes.mortality_1y = u_death < p1y;
    rec.outcomes.readmit_90d = u_readmit < prob[static_cast<std::size_t>(Outcome::readmit_90d)];

    std::string note = "DISCHARGE SUMMARY\n\n";
    for (int k = filler_count(rng); k > 0; --k) note += std::string(kFiller[filler_pick(rng)]) + "\n";
    note += std::string(kSeverityMarker) + " " + std::to_string(u) + "\n";
    for (int k = filler_count(rng); k > 0; --k) note += std::string(kFiller[filler_pick(rng)]) + "\n";
    rec.note_text = std::move(note);

    cohort.records.push_back(std::move(rec));
  }
  return cohort;
}

}  // namespace noterisk
