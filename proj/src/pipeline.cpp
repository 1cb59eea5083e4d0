#include "noterisk/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <thread>

#include "json.hpp"
#include "noterisk/csv.hpp"
#include "noterisk/error.hpp"

namespace noterisk {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void RunConfig::validate() const {
  const bool has_files = features_csv.has_value() || notes_dir.has_value();
  if (has_files && synth) throw ConfigError("give either input files or a synth spec, not both");
  if (!synth && !(features_csv && notes_dir)) {
    throw ConfigError("input needs both features_csv and notes_dir (or a synth spec)");
  }
  if (synth && synth->n < 1) throw ConfigError("synth.n must be >= 1");
  llm.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
  if (outcomes.empty()) throw ConfigError("at least one outcome is required");
  if (feature_sets.empty()) throw ConfigError("at least one feature set is required");
  if (std::set<Outcome>(outcomes.begin(), outcomes.end()).size() != outcomes.size()) {
    throw ConfigError("duplicate outcome in config");
  }
  if (std::set<FeatureSet>(feature_sets.begin(), feature_sets.end()).size() !=
      feature_sets.size()) {
    throw ConfigError("duplicate feature set in config");
  }
  if (lambda_count < 1) throw ConfigError("lambda_count must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <class T>
void read_opt(const json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(std::string_view text) {
  RunConfig c;
  try {
    json j = json::parse(text);
    reject_unknown(j,
                   {"input", "synth", "llm", "train_fraction", "cv_folds", "cv_criterion", "seed",
                    "outcomes", "feature_sets", "output_dir", "lambda_count", "tol", "max_iter",
                    "divergence_top_k", "threads", "record_timings"},
                   "config");
    if (j.contains("input")) {
      const auto& in = j.at("input");
      reject_unknown(in, {"features_csv", "notes_dir", "open_schema"}, "input");
      if (in.contains("features_csv")) c.features_csv = in.at("features_csv").get<std::string>();
      if (in.contains("notes_dir")) c.notes_dir = in.at("notes_dir").get<std::string>();
      read_opt(in, "open_schema", c.open_schema);
    }
    if (j.contains("synth") && !j.at("synth").is_null()) {
      const auto& s = j.at("synth");
      reject_unknown(s, {"n", "seed", "missing_rate"}, "synth");
      SynthSpec spec;
      read_opt(s, "n", spec.n);
      read_opt(s, "seed", spec.seed);
      read_opt(s, "missing_rate", spec.config.missing_rate);
      c.synth = spec;
    }
    if (j.contains("llm")) {
      const auto& l = j.at("llm");
      reject_unknown(l,
                     {"base_url", "model_name", "api_key_env", "temperature", "max_output_tokens",
                      "timeout_seconds", "max_retries", "max_concurrent", "backoff_base_seconds",
                      "max_failure_fraction", "mock", "cache_path"},
                     "llm");
      read_opt(l, "base_url", c.llm.base_url);
      read_opt(l, "model_name", c.llm.model_name);
      read_opt(l, "api_key_env", c.llm.api_key_env);
      read_opt(l, "temperature", c.llm.temperature);
      read_opt(l, "max_output_tokens", c.llm.max_output_tokens);
      read_opt(l, "timeout_seconds", c.llm.timeout_seconds);
      read_opt(l, "max_retries", c.llm.max_retries);
      read_opt(l, "max_concurrent", c.llm.max_concurrent);
      read_opt(l, "backoff_base_seconds", c.llm.backoff_base_seconds);
      read_opt(l, "max_failure_fraction", c.llm.max_failure_fraction);
      if (l.contains("mock") && !l.at("mock").is_null()) {
        c.mock = parse_mock_mode(l.at("mock").get<std::string>());
      }
      if (l.contains("cache_path") && !l.at("cache_path").is_null()) {
        c.cache_path = l.at("cache_path").get<std::string>();
      }
    }
    read_opt(j, "train_fraction", c.train_fraction);
    read_opt(j, "cv_folds", c.cv_folds);
    if (j.contains("cv_criterion")) {
      c.cv_criterion = parse_cv_criterion(j.at("cv_criterion").get<std::string>());
    }
    read_opt(j, "seed", c.seed);
    if (j.contains("outcomes")) {
      c.outcomes.clear();
      for (const auto& o : j.at("outcomes")) c.outcomes.push_back(parse_outcome(o.get<std::string>()));
    }
    if (j.contains("feature_sets")) {
      c.feature_sets.clear();
      for (const auto& f : j.at("feature_sets")) {
        c.feature_sets.push_back(parse_feature_set(f.get<std::string>()));
      }
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    read_opt(j, "lambda_count", c.lambda_count);
    read_opt(j, "tol", c.tol);
    read_opt(j, "max_iter", c.max_iter);
    read_opt(j, "divergence_top_k", c.divergence_top_k);
    read_opt(j, "threads", c.threads);
    read_opt(j, "record_timings", c.record_timings);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  return c;
}

namespace {

ordered_json config_snapshot(const RunConfig& c) {
  ordered_json j;
  if (c.synth) {
    j["synth"] = {{"n", c.synth->n},
                  {"seed", c.synth->seed},
                  {"missing_rate", c.synth->config.missing_rate}};
  } else {
    j["input"] = {{"features_csv", c.features_csv ? c.features_csv->string() : ""},
                  {"notes_dir", c.notes_dir ? c.notes_dir->string() : ""},
                  {"open_schema", c.open_schema}};
  }
  j["llm"] = {{"base_url", c.llm.base_url},
              {"model_name", c.llm.model_name},
              {"api_key_env", c.llm.api_key_env},
              {"temperature", c.llm.temperature},
              {"max_output_tokens", c.llm.max_output_tokens},
              {"timeout_seconds", c.llm.timeout_seconds},
              {"max_retries", c.llm.max_retries},
              {"max_concurrent", c.llm.max_concurrent},
              {"backoff_base_seconds", c.llm.backoff_base_seconds},
              {"max_failure_fraction", c.llm.max_failure_fraction},
              {"mock", c.mock ? ordered_json(to_string(*c.mock)) : ordered_json(nullptr)},
              {"cache_path", c.cache_path ? ordered_json(c.cache_path->string())
                                          : ordered_json(nullptr)}};
  j["train_fraction"] = c.train_fraction;
  j["cv_folds"] = c.cv_folds;
  j["cv_criterion"] = to_string(c.cv_criterion);
  j["seed"] = c.seed;
  j["outcomes"] = ordered_json::array();
  for (Outcome o : c.outcomes) j["outcomes"].push_back(to_string(o));
  j["feature_sets"] = ordered_json::array();
  for (FeatureSet f : c.feature_sets) j["feature_sets"].push_back(to_string(f));
  j["lambda_count"] = c.lambda_count;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  j["divergence_top_k"] = c.divergence_top_k;
  return j;
}

}  // namespace

std::string config_to_json(const RunConfig& config) { return config_snapshot(config).dump(2) + "\n"; }

std::vector<std::string> emr_columns(const FeatureSpec& spec) {
  std::vector<std::string> cols = {std::string(kGenderFeature), std::string(kAgeFeature)};
  for (const auto& e : spec.entries()) cols.push_back(e.name);
  return cols;
}

DesignMatrix build_design(const Cohort& cohort, const std::map<std::string, GptAnswers>& answers,
                          Outcome outcome, FeatureSet feature_set,
                          std::vector<std::string>* row_ids) {
  const bool use_emr = feature_set != FeatureSet::gpt;
  const bool use_gpt = feature_set != FeatureSet::emr;
  DesignMatrix x;
  if (use_emr) x.columns = emr_columns(cohort.spec);
  if (use_gpt) {
    for (auto c : kGptColumns) x.columns.emplace_back(c);
  }

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    if (!use_gpt || answers.contains(cohort.records[i].patient_id)) rows.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  x.values.resize(n, static_cast<Eigen::Index>(x.columns.size()));
  x.labels.resize(n);
  if (row_ids) row_ids->clear();
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& rec = cohort.records[rows[static_cast<std::size_t>(r)]];
    Eigen::Index c = 0;
    if (use_emr) {
      x.values(r, c++) = rec.gender == Gender::male ? 1.0 : 0.0;
      x.values(r, c++) = rec.age_at_discharge;
      for (std::size_t j = 0; j < rec.emr_features.size(); ++j) {
        if (!rec.emr_features[j]) {
          throw DataError("patient '" + rec.patient_id + "' has missing feature '" +
                          cohort.spec.at(j).name + "' (impute first)");
        }
        x.values(r, c++) = *rec.emr_features[j];
      }
    }
    if (use_gpt) {
      const auto& a = answers.at(rec.patient_id);
      x.values(r, c++) = a.risk_death;
      x.values(r, c++) = a.risk_readmit;
      x.values(r, c++) = a.overall_health;
    }
    x.labels[r] = rec.outcomes.get(outcome) ? 1.0 : 0.0;
    if (row_ids) row_ids->push_back(rec.patient_id);
  }
  return x;
}

std::map<std::string, std::map<std::string, std::string>> subgroup_assignment(const Cohort& cohort) {
  std::map<std::string, std::map<std::string, std::string>> groups;
  for (const auto& r : cohort.records) {
    groups["gender"][r.patient_id] = r.gender == Gender::female ? "female" : "male";
    groups["age"][r.patient_id] = r.age_at_discharge >= 65 ? "65_plus" : "under_65";
  }
  return groups;
}

Cohort obtain_cohort(const RunConfig& config) {
  if (config.synth) {
    auto cohort = generate_synthetic(config.synth->n, config.synth->seed, config.synth->config);
    const fs::path dir = config.output_dir / "cohort";
    write_cohort(cohort, dir / "features.csv", dir / "notes");
    return load_cohort(dir / "features.csv", dir / "notes");
  }
  return load_cohort(*config.features_csv, *config.notes_dir, {config.open_schema});
}

std::unique_ptr<LlmClient> make_client(const RunConfig& config) {
  std::shared_ptr<ChatBackend> backend;
  if (config.mock) {
    backend = std::make_shared<MockChatBackend>(*config.mock);
  } else {
    backend = std::make_shared<HttpChatBackend>(config.llm);
  }
  auto cache = config.cache_path ? std::make_shared<PromptCache>(*config.cache_path)
                                 : std::make_shared<PromptCache>();
  return std::make_unique<LlmClient>(config.llm, std::move(backend), std::move(cache));
}

namespace {

ScoredSet score_set(const Eigen::VectorXd& probs, const DesignMatrix& x,
                    const std::vector<std::string>& ids) {
  std::vector<ScoredEntry> entries;
  entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto ii = static_cast<Eigen::Index>(i);
    entries.push_back({ids[i], probs[ii], x.labels[ii] == 1.0});
  }
  return ScoredSet(std::move(entries));
}

// Restricts `s` to the patients present in `keep`.
ScoredSet restrict_to(const ScoredSet& s, const ScoredSet& keep) {
  std::set<std::string> ids;
  for (const auto& e : keep.entries()) ids.insert(e.patient_id);
  std::vector<ScoredEntry> out;
  for (const auto& e : s.entries()) {
    if (ids.contains(e.patient_id)) out.push_back(e);
  }
  return ScoredSet(std::move(out));
}

std::string cell_name(Outcome o, FeatureSet f) {
  return std::string(to_string(o)) + "__" + std::string(to_string(f));
}

}  // namespace

ExperimentResult run_on_split(const RunConfig& config, const Cohort& train_raw,
                              const Cohort& test_raw, const FeaturizationResult& features) {
  config.validate();
  Cohort train = impute_missing(train_raw, train_raw);
  Cohort test = impute_missing(train_raw, test_raw);
  auto groups = subgroup_assignment(test);

  CvOptions cv_options;
  cv_options.folds = config.cv_folds;
  cv_options.criterion = config.cv_criterion;
  cv_options.seed = config.seed;
  cv_options.threads = config.threads ? config.threads
                                      : std::max(1u, std::thread::hardware_concurrency());
  cv_options.solver.tol = config.tol;
  cv_options.solver.max_iter = config.max_iter;

  ExperimentResult result;
  for (Outcome o : config.outcomes) {
    for (FeatureSet f : config.feature_sets) {
      const std::string where = cell_name(o, f);
      try {
        std::vector<std::string> train_ids, test_ids;
        DesignMatrix x_train = build_design(train, features.answers, o, f, &train_ids);
        DesignMatrix x_test = build_design(test, features.answers, o, f, &test_ids);
        if (x_train.rows() < 2 || !x_train.has_both_classes()) {
          throw ModelError("training split needs both classes");
        }
        auto path = LambdaPath::for_data(x_train, config.lambda_count);
        auto cv = cv_select(x_train, path, cv_options);
        cv.model.meta = {std::string(to_string(o)), std::string(to_string(f)), config.seed};
        auto scores = score_set(predict_probs(cv.model, x_test), x_test, test_ids);
        CellResult cell{o, f, cv.model, std::move(cv), std::move(scores), {},
                        static_cast<std::size_t>(x_train.rows())};
        cell.report = evaluate(o, f, cell.test_scores, groups);
        result.reports.push_back(cell.report);
        result.cells.push_back(std::move(cell));
      } catch (const ModelError& e) {
        throw ModelError(where + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    }

    // Calibration of the raw risk-of-death answer on the test split.
    std::map<std::string, GptAnswers> test_answers;
    std::map<std::string, bool> test_labels;
    for (const auto& r : test.records) {
      auto it = features.answers.find(r.patient_id);
      if (it == features.answers.end()) continue;
      test_answers.emplace(r.patient_id, it->second);
      test_labels.emplace(r.patient_id, r.outcomes.get(o));
    }
    if (!test_answers.empty()) {
      result.calibration.emplace_back(o, risk_bin_calibration(test_answers, test_labels));
    }
  }

  for (Outcome o : config.outcomes) {
    const CellResult* emr = nullptr;
    const CellResult* both = nullptr;
    for (const auto& c : result.cells) {
      if (c.outcome != o) continue;
      if (c.feature_set == FeatureSet::emr) emr = &c;
      if (c.feature_set == FeatureSet::both) both = &c;
    }
    if (!emr || !both) continue;
    ScoredSet a = restrict_to(emr->test_scores, both->test_scores);
    const ScoredSet& b = both->test_scores;
    std::vector<ScatterPoint> points;
    for (const auto& e : b.entries()) {
      points.push_back({e.patient_id, a.find(e.patient_id)->score, e.score});
    }
    std::sort(points.begin(), points.end(),
              [](const auto& l, const auto& r) { return l.patient_id < r.patient_id; });
    result.scatter.emplace_back(o, std::move(points));
    result.divergence.emplace_back(o, divergence_report(a, b, config.divergence_top_k));
    try {
      result.emr_both_correlation.emplace_back(o, score_correlation(a, b));
    } catch (const DataError&) {
      // constant predictions: correlation undefined, omitted
    }
  }

  ordered_json manifest;
  manifest["software_version"] = kSoftwareVersion;
  manifest["config"] = config_snapshot(config);
  manifest["cohort_size"] = train.records.size() + test.records.size();
  manifest["train_size"] = train.records.size();
  manifest["test_size"] = test.records.size();
  manifest["cache"] = {{"hits", features.cache_hits}, {"misses", features.cache_misses}};
  ordered_json excluded = ordered_json::object();
  for (const auto& [id, err] : features.failures) excluded[id] = err;
  manifest["excluded_from_gpt_models"] = excluded;
  manifest["models"] = ordered_json::array();
  for (const auto& c : result.cells) {
    manifest["models"].push_back({{"outcome", to_string(c.outcome)},
                                  {"feature_set", to_string(c.feature_set)},
                                  {"lambda_min", c.cv.lambda_min},
                                  {"n_nonzero", c.model.n_nonzero},
                                  {"n_features", c.model.columns.size() + c.model.dropped_columns.size()},
                                  {"cv_fold_seed", c.cv.fold_seed},
                                  {"n_train", c.n_train},
                                  {"n_test", c.test_scores.size()}});
  }
  ordered_json corr = ordered_json::object();
  for (const auto& [o, r] : result.emr_both_correlation) corr[std::string(to_string(o))] = r;
  manifest["emr_both_score_correlation"] = corr;
  result.manifest_json = manifest.dump(2) + "\n";
  result.test = std::move(test);
  return result;
}

namespace {

std::string predictions_csv(const ScoredSet& s, const Cohort& test) {
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& r : test.records) by_id.emplace(r.patient_id, &r);
  std::vector<const ScoredEntry*> rows;
  for (const auto& e : s.entries()) rows.push_back(&e);
  std::sort(rows.begin(), rows.end(),
            [](const auto* a, const auto* b) { return a->patient_id < b->patient_id; });
  std::string out = csv_line({"patient_id", "score", "label", "gender", "age_at_discharge"});
  for (const auto* e : rows) {
    const auto* rec = by_id.at(e->patient_id);
    out += csv_line({e->patient_id, format_real(e->score), e->label ? "1" : "0",
                     rec->gender == Gender::female ? "F" : "M",
                     std::to_string(rec->age_at_discharge)});
  }
  return out;
}

void write_report_files(const fs::path& dir, const std::vector<EvalReport>& reports,
                        const std::vector<Outcome>& outcomes,
                        const std::vector<FeatureSet>& feature_sets) {
  write_file(dir / "reports.json", reports_to_json(reports));
  std::string csv = report_csv_header();
  for (const auto& r : reports) csv += report_csv_row(r);
  write_file(dir / "reports.csv", csv);
  emit_tables(reports, outcomes, feature_sets, dir);
}

}  // namespace

void write_artifacts(const RunConfig& config, const ExperimentResult& result) {
  const fs::path& dir = config.output_dir;
  fs::create_directories(dir / "models");
  fs::create_directories(dir / "predictions");
  for (const auto& c : result.cells) {
    const std::string name = cell_name(c.outcome, c.feature_set);
    write_file(dir / "models" / (name + ".json"), model_to_json(c.model));
    write_file(dir / "predictions" / (name + ".csv"), predictions_csv(c.test_scores, result.test));
  }
  write_report_files(dir, result.reports, config.outcomes, config.feature_sets);
  write_file(dir / "calibration.csv", calibration_csv(result.calibration));
  write_file(dir / "scatter.csv", scatter_csv(result.scatter));
  write_file(dir / "divergence.csv", divergence_csv(result.divergence));
  write_file(dir / "manifest.json", result.manifest_json);
}

ExperimentResult run_experiment(const RunConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;
  ordered_json timings = ordered_json::object();
  auto stage = [&](const char* name, auto&& fn) {
    auto t0 = clock::now();
    auto value = fn();
    timings[name] = std::chrono::duration<double>(clock::now() - t0).count();
    return value;
  };

  Cohort cohort = stage("load", [&] { return obtain_cohort(config); });
  auto client = make_client(config);
  FeaturizationResult features = stage("featurize", [&] { return featurize_cohort(*client, cohort); });
  auto [train, test] = stage("split", [&] {
    return split_train_test(cohort, config.train_fraction, config.seed);
  });
  ExperimentResult result = stage("model", [&] { return run_on_split(config, train, test, features); });

  if (config.record_timings) {
    auto manifest = ordered_json::parse(result.manifest_json);
    manifest["timings_seconds"] = timings;
    result.manifest_json = manifest.dump(2) + "\n";
  }
  write_artifacts(config, result);
  return result;
}

std::vector<EvalReport> rebuild_reports(const fs::path& output_dir) {
  const fs::path pred_dir = output_dir / "predictions";
  if (!fs::is_directory(pred_dir)) throw DataError("no predictions directory in " + output_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<EvalReport> reports;
  std::vector<Outcome> outcomes;
  std::vector<FeatureSet> feature_sets;
  std::map<Outcome, std::map<FeatureSet, ScoredSet>> scored;
  for (const auto& file : files) {
    auto stem = file.stem().string();
    auto sep = stem.find("__");
    if (sep == std::string::npos) throw DataError("unexpected prediction file " + file.string());
    Outcome o = parse_outcome(stem.substr(0, sep));
    FeatureSet f = parse_feature_set(stem.substr(sep + 2));
    auto table = read_csv(file);
    if (table.header != CsvRow{"patient_id", "score", "label", "gender", "age_at_discharge"}) {
      throw DataError("unexpected header in " + file.string());
    }
    std::vector<ScoredEntry> entries;
    std::map<std::string, std::map<std::string, std::string>> groups;
    for (const auto& row : table.rows) {
      auto score = parse_real(row[1]);
      if (!score) throw DataError("bad score in " + file.string());
      entries.push_back({row[0], *score, row[2] == "1"});
      groups["gender"][row[0]] = row[3] == "F" ? "female" : "male";
      groups["age"][row[0]] = std::stoi(row[4]) >= 65 ? "65_plus" : "under_65";
    }
    ScoredSet s(std::move(entries));
    reports.push_back(evaluate(o, f, s, groups));
    scored[o].emplace(f, std::move(s));
    if (std::find(outcomes.begin(), outcomes.end(), o) == outcomes.end()) outcomes.push_back(o);
    if (std::find(feature_sets.begin(), feature_sets.end(), f) == feature_sets.end()) {
      feature_sets.push_back(f);
    }
  }
  if (reports.empty()) throw DataError("no prediction files in " + pred_dir.string());

  // Canonical row and column order.
  std::sort(outcomes.begin(), outcomes.end());
  std::sort(feature_sets.begin(), feature_sets.end());
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return std::pair(a.outcome, a.feature_set) < std::pair(b.outcome, b.feature_set);
  });
  write_report_files(output_dir, reports, outcomes, feature_sets);

  std::vector<std::pair<Outcome, std::vector<ScatterPoint>>> scatter;
  std::vector<std::pair<Outcome, DivergenceReport>> divergence;
  for (Outcome o : outcomes) {
    auto& m = scored[o];
    if (!m.contains(FeatureSet::emr) || !m.contains(FeatureSet::both)) continue;
    ScoredSet a = restrict_to(m.at(FeatureSet::emr), m.at(FeatureSet::both));
    const ScoredSet& b = m.at(FeatureSet::both);
    std::vector<ScatterPoint> points;
    for (const auto& e : b.entries()) points.push_back({e.patient_id, a.find(e.patient_id)->score, e.score});
    std::sort(points.begin(), points.end(),
              [](const auto& l, const auto& r) { return l.patient_id < r.patient_id; });
    scatter.emplace_back(o, std::move(points));
    divergence.emplace_back(o, divergence_report(a, b, 20));
  }
  write_file(output_dir / "scatter.csv", scatter_csv(scatter));
  write_file(output_dir / "divergence.csv", divergence_csv(divergence));
  return reports;
}

}  // namespace noterisk
