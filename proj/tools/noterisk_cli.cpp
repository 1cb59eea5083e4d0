#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "noterisk/csv.hpp"
#include "noterisk/error.hpp"
#include "noterisk/pipeline.hpp"

using namespace noterisk;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mock;
  std::string out;
  std::vector<std::string> outcomes;
  std::vector<std::string> feature_sets;
  std::string features_csv;
  std::string notes_dir;
  std::string cache;
  std::optional<std::size_t> synth_n;
  bool open_schema = false;
  bool timings = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--seed", f.seed, "split/CV seed (also the synth seed for `synth`)");
  cmd->add_option("--mock-llm", f.mock, "offline LLM backend: marker or paper");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--outcome", f.outcomes, "outcome to model (repeatable)");
  cmd->add_option("--feature-set", f.feature_sets, "emr, gpt or both (repeatable)");
  cmd->add_option("--features", f.features_csv, "cohort features CSV");
  cmd->add_option("--notes", f.notes_dir, "directory of discharge notes");
  cmd->add_option("--cache", f.cache, "prompt cache (JSONL)");
  cmd->add_option("--synth-n", f.synth_n, "synthesize a cohort of this size");
  cmd->add_flag("--open-schema", f.open_schema, "accept unknown feature columns");
  cmd->add_flag("--timings", f.timings, "record per-stage wall-clock in the manifest");
}

// File values first, then flags on top.
RunConfig resolve(const CommonFlags& f) {
  RunConfig c;
  if (!f.config_path.empty()) {
    std::string text;
    try {
      text = read_file(f.config_path);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    c = config_from_json(text);
  }
  if (f.seed) c.seed = *f.seed;
  if (!f.mock.empty()) c.mock = parse_mock_mode(f.mock);
  if (!f.out.empty()) c.output_dir = f.out;
  if (!f.outcomes.empty()) {
    c.outcomes.clear();
    for (const auto& o : f.outcomes) c.outcomes.push_back(parse_outcome(o));
  }
  if (!f.feature_sets.empty()) {
    c.feature_sets.clear();
    for (const auto& s : f.feature_sets) c.feature_sets.push_back(parse_feature_set(s));
  }
  if (!f.features_csv.empty() || !f.notes_dir.empty()) {
    c.synth.reset();
    if (!f.features_csv.empty()) c.features_csv = f.features_csv;
    if (!f.notes_dir.empty()) c.notes_dir = f.notes_dir;
  }
  if (f.synth_n) {
    c.features_csv.reset();
    c.notes_dir.reset();
    if (!c.synth) c.synth = SynthSpec{};
    c.synth->n = *f.synth_n;
  }
  if (!f.cache.empty()) c.cache_path = f.cache;
  if (f.open_schema) c.open_schema = true;
  if (f.timings) c.record_timings = true;
  return c;
}

int cmd_synth(const CommonFlags& f) {
  SynthSpec spec;
  if (f.synth_n) spec.n = *f.synth_n;
  if (f.seed) spec.seed = *f.seed;
  if (f.out.empty()) throw ConfigError("synth needs --out");
  auto cohort = generate_synthetic(spec.n, spec.seed, spec.config);
  const std::filesystem::path out = f.out;
  write_cohort(cohort, out / "features.csv", out / "notes");
  std::cout << "wrote " << cohort.records.size() << " patients to " << out.string() << "\n";
  return 0;
}

int cmd_featurize(const CommonFlags& f) {
  RunConfig c = resolve(f);
  if (!c.cache_path) throw ConfigError("featurize needs a cache path (--cache or llm.cache_path)");
  c.validate();
  Cohort cohort = obtain_cohort(c);
  auto client = make_client(c);
  auto result = featurize_cohort(*client, cohort);
  std::cout << "featurized " << result.answers.size() << " of " << cohort.records.size()
            << " patients (cache hits " << result.cache_hits << ", misses " << result.cache_misses
            << ", failures " << result.failures.size() << ")\n";
  for (const auto& [id, err] : result.failures) std::cerr << "  " << id << ": " << err << "\n";
  return 0;
}

int cmd_run(const CommonFlags& f) {
  RunConfig c = resolve(f);
  auto result = run_experiment(c);
  std::cout << "outcome,feature_set,auc\n";
  for (const auto& r : result.reports) {
    std::cout << to_string(r.outcome) << "," << to_string(r.feature_set) << ","
              << format_real(r.auc) << "\n";
  }
  std::cout << "artifacts in " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_report(const CommonFlags& f) {
  std::filesystem::path dir = f.out;
  if (dir.empty()) {
    if (f.config_path.empty()) throw ConfigError("report needs --out (or a config with output_dir)");
    dir = resolve(f).output_dir;
  }
  auto reports = rebuild_reports(dir);
  std::cout << "rebuilt " << reports.size() << " reports in " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discharge-note risk features and LASSO risk models"};
  app.require_subcommand(1);
  CommonFlags flags;
  auto* synth = app.add_subcommand("synth", "write a synthetic cohort");
  auto* featurize = app.add_subcommand("featurize", "populate the prompt cache only");
  auto* run = app.add_subcommand("run", "full experiment");
  auto* report = app.add_subcommand("report", "re-emit tables from saved predictions");
  for (auto* cmd : {synth, featurize, run, report}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(flags);
    if (featurize->parsed()) return cmd_featurize(flags);
    if (run->parsed()) return cmd_run(flags);
    return cmd_report(flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const LlmError& e) {
    std::cerr << "llm error: " << e.what() << "\n";
    return 4;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
