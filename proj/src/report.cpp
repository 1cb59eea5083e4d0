#include "noterisk/report.hpp"

#include <set>

#include "json.hpp"
#include "noterisk/csv.hpp"
#include "noterisk/error.hpp"

namespace noterisk {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json to_json_value(const EvalReport& r) {
  ordered_json ppv = ordered_json::object();
  for (const auto& [f, v] : r.ppv_at) ppv[format_real(f)] = v;
  ordered_json sub = ordered_json::object();
  for (const auto& [g, v] : r.subgroup_auc) {
    sub[g] = v ? ordered_json(*v) : ordered_json("undefined");
  }
  return {{"outcome", to_string(r.outcome)},
          {"feature_set", to_string(r.feature_set)},
          {"auc", r.auc},
          {"error_rate", r.error_rate},
          {"ppv_at", ppv},
          {"subgroup_auc", sub}};
}

const EvalReport* find_report(const std::vector<EvalReport>& reports, Outcome o, FeatureSet f) {
  for (const auto& r : reports) {
    if (r.outcome == o && r.feature_set == f) return &r;
  }
  return nullptr;
}

void require_grid(const std::vector<EvalReport>& reports, const std::vector<Outcome>& outcomes,
                  const std::vector<FeatureSet>& feature_sets) {
  if (reports.empty()) throw DataError("no reports to emit");
  std::string missing;
  for (Outcome o : outcomes) {
    for (FeatureSet f : feature_sets) {
      if (!find_report(reports, o, f)) {
        if (!missing.empty()) missing += ", ";
        missing += std::string(to_string(o)) + "/" + std::string(to_string(f));
      }
    }
  }
  if (!missing.empty()) throw DataError("report grid is incomplete; missing " + missing);
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string("undefined");
}

}  // namespace

std::string report_to_json(const EvalReport& report) { return to_json_value(report).dump(2) + "\n"; }

std::string reports_to_json(const std::vector<EvalReport>& reports) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : reports) arr.push_back(to_json_value(r));
  return arr.dump(2) + "\n";
}

std::string report_csv_header() {
  CsvRow h = {"outcome", "feature_set", "auc", "error_rate"};
  for (double f : kPpvFractions) h.push_back("ppv_" + format_real(f));
  return csv_line(h);
}

std::string report_csv_row(const EvalReport& r) {
  CsvRow row = {std::string(to_string(r.outcome)), std::string(to_string(r.feature_set)),
                format_real(r.auc), format_real(r.error_rate)};
  for (double f : kPpvFractions) {
    auto it = r.ppv_at.find(f);
    row.push_back(it == r.ppv_at.end() ? std::string() : format_real(it->second));
  }
  return csv_line(row);
}

std::string table1_csv(const std::vector<EvalReport>& reports, const std::vector<Outcome>& outcomes,
                       const std::vector<FeatureSet>& feature_sets) {
  require_grid(reports, outcomes, feature_sets);
  CsvRow header = {"outcome"};
  for (FeatureSet f : feature_sets) header.emplace_back(to_string(f));
  std::string out = csv_line(header);
  for (Outcome o : outcomes) {
    CsvRow row = {std::string(to_string(o))};
    for (FeatureSet f : feature_sets) row.push_back(format_real(find_report(reports, o, f)->auc));
    out += csv_line(row);
  }
  return out;
}

std::string table2_csv(const std::vector<EvalReport>& reports, const std::vector<Outcome>& outcomes,
                       const std::vector<FeatureSet>& feature_sets) {
  require_grid(reports, outcomes, feature_sets);
  CsvRow header = {"outcome", "fraction"};
  for (FeatureSet f : feature_sets) header.emplace_back(to_string(f));
  std::string out = csv_line(header);
  for (Outcome o : outcomes) {
    for (double frac : kPpvFractions) {
      CsvRow row = {std::string(to_string(o)), format_real(frac)};
      for (FeatureSet f : feature_sets) {
        const auto& ppv = find_report(reports, o, f)->ppv_at;
        auto it = ppv.find(frac);
        if (it == ppv.end()) {
          throw DataError("report " + std::string(to_string(o)) + "/" +
                          std::string(to_string(f)) + " lacks PPV at " + format_real(frac));
        }
        row.push_back(format_real(it->second));
      }
      out += csv_line(row);
    }
  }
  return out;
}

std::string subgroups_csv(const std::vector<EvalReport>& reports,
                          const std::vector<Outcome>& outcomes,
                          const std::vector<FeatureSet>& feature_sets) {
  require_grid(reports, outcomes, feature_sets);
  std::string out = csv_line({"dimension", "outcome", "feature_set", "group_a", "auc_a", "group_b",
                              "auc_b", "difference_pp"});
  for (const auto& dim : subgroup_dimensions()) {
    for (Outcome o : outcomes) {
      for (FeatureSet f : feature_sets) {
        const auto& sub = find_report(reports, o, f)->subgroup_auc;
        auto get = [&](const std::string& group) -> std::optional<double> {
          auto it = sub.find(dim.name + ":" + group);
          return it == sub.end() ? std::nullopt : it->second;
        };
        auto a = get(dim.group_a);
        auto b = get(dim.group_b);
        std::optional<double> diff;
        if (a && b) diff = difference_pp(*a, *b);
        out += csv_line({dim.name, std::string(to_string(o)), std::string(to_string(f)),
                         dim.group_a, optional_cell(a), dim.group_b, optional_cell(b),
                         optional_cell(diff)});
      }
    }
  }
  return out;
}

std::string summary_json(const std::vector<EvalReport>& reports) {
  bool has_emr = false, has_both = false;
  for (const auto& r : reports) {
    has_emr = has_emr || r.feature_set == FeatureSet::emr;
    has_both = has_both || r.feature_set == FeatureSet::both;
  }
  ordered_json j;
  if (has_emr && has_both) {
    auto d = compute_summary_deltas(reports);
    j["avg_auc_gain_pp"] = d.avg_auc_gain_pp;
    j["avg_rel_ppv_gain_decile"] = d.avg_rel_ppv_gain_decile;
  } else {
    j["avg_auc_gain_pp"] = nullptr;
    j["avg_rel_ppv_gain_decile"] = nullptr;
  }
  return j.dump(2) + "\n";
}

void emit_tables(const std::vector<EvalReport>& reports, const std::vector<Outcome>& outcomes,
                 const std::vector<FeatureSet>& feature_sets, const std::filesystem::path& dir) {
  require_grid(reports, outcomes, feature_sets);
  write_file(dir / "table1.csv", table1_csv(reports, outcomes, feature_sets));
  write_file(dir / "table2.csv", table2_csv(reports, outcomes, feature_sets));
  write_file(dir / "subgroups.csv", subgroups_csv(reports, outcomes, feature_sets));
  write_file(dir / "summary.json", summary_json(reports));
}

std::string calibration_csv(
    const std::vector<std::pair<Outcome, std::vector<CalibrationBin>>>& bins) {
  std::string out = csv_line({"outcome", "score", "n", "event_rate"});
  for (const auto& [o, list] : bins) {
    for (const auto& b : list) {
      out += csv_line({std::string(to_string(o)), std::to_string(b.gpt_score), std::to_string(b.n),
                       format_real(b.event_rate)});
    }
  }
  return out;
}

std::string scatter_csv(const std::vector<std::pair<Outcome, std::vector<ScatterPoint>>>& points) {
  std::string out = csv_line({"outcome", "patient_id", "emr_score", "both_score"});
  for (const auto& [o, list] : points) {
    for (const auto& p : list) {
      out += csv_line({std::string(to_string(o)), p.patient_id, format_real(p.emr_score),
                       format_real(p.both_score)});
    }
  }
  return out;
}

std::string divergence_csv(const std::vector<std::pair<Outcome, DivergenceReport>>& reports) {
  std::string out = csv_line({"outcome", "direction", "rank", "patient_id", "score_emr",
                              "score_both", "delta"});
  for (const auto& [o, rep] : reports) {
    auto emit = [&](const char* direction, const std::vector<DivergenceEntry>& list) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& e = list[i];
        out += csv_line({std::string(to_string(o)), direction, std::to_string(i + 1), e.patient_id,
                         format_real(e.score_a), format_real(e.score_b), format_real(e.delta)});
      }
    };
    emit("increase", rep.largest_increase);
    emit("decrease", rep.largest_decrease);
  }
  return out;
}

}  // namespace noterisk
