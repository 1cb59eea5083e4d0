#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "noterisk/cohort.hpp"
#include "noterisk/csv.hpp"
#include "noterisk/error.hpp"
#include "noterisk/feature_registry.hpp"
#include "oracles.hpp"

using namespace noterisk;

namespace {

const char* kHeader =
    "patient_id,gender,age_at_discharge,note_file,mortality_90d,mortality_1y,readmit_90d,"
    "charlson_comorbidity_index,aids,lactate_mean\n";

void write_notes(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) write_file(dir / n, std::string("Discharge note for ") + n + "\n");
}

}  // namespace

TEST_CASE("registry has seventy EMR features with unique names") {
  auto reg = emr_registry();
  CHECK(reg.size() == 70);
  std::set<std::string> names;
  std::map<FeatureGroup, int> by_group;
  for (const auto& e : reg) {
    names.insert(e.name);
    by_group[e.group]++;
  }
  CHECK(names.size() == 70);
  CHECK(by_group[FeatureGroup::demographics] == 2);
  CHECK(by_group[FeatureGroup::comorbidities] == 19);
  CHECK(by_group[FeatureGroup::lab_tests] == 34);
  CHECK(by_group[FeatureGroup::sapsii] == 6);
  CHECK(by_group[FeatureGroup::sofa] == 9);
  CHECK(find_registry_entry("aids")->kind == FeatureKind::binary);
  CHECK(find_registry_entry("no_such_feature") == nullptr);
}

TEST_CASE("aggregate_stay") {
  std::vector<double> a = {1.0, 2.0, 3.0};
  auto s = aggregate_stay(a);
  CHECK(s.min == 1.0);
  CHECK(s.max == 3.0);
  CHECK(s.mean == 2.0);

  std::vector<double> one = {5.0};
  s = aggregate_stay(one);
  CHECK((s.min == 5.0 && s.max == 5.0 && s.mean == 5.0));

  CHECK_THROWS_WITH_AS(aggregate_stay({}), "no observations", DataError);
  std::vector<double> bad = {1.0, NAN};
  CHECK_THROWS_AS(aggregate_stay(bad), DataError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(1 + t % 17);
    for (auto& x : v) x = u(rng);
    auto r = aggregate_stay(v);
    CHECK(r.min <= r.mean);
    CHECK(r.mean <= r.max);
    std::shuffle(v.begin(), v.end(), rng);
    auto r2 = aggregate_stay(v);
    CHECK(r2.min == r.min);
    CHECK(r2.max == r.max);
    CHECK(r2.mean == doctest::Approx(r.mean).epsilon(1e-12));
  }
}

TEST_CASE("load_cohort reads a fixture and round-trips through write_cohort") {
  oracle::TempDir tmp("cohort");
  write_notes(tmp.path / "notes", {"a.txt", "b.txt", "c.txt"});
  write_file(tmp.path / "f.csv", std::string(kHeader) +
                                     "p1,F,70,a.txt,0,0,1,3,0,1.5\n"
                                     "p2,M,55,b.txt,1,1,0,,1,\n"
                                     "p3,M,81,c.txt,0,1,0,7,0,2.25\n");
  Cohort c = load_cohort(tmp.path / "f.csv", tmp.path / "notes");
  REQUIRE(c.records.size() == 3);
  CHECK(c.spec.size() == 3);
  CHECK(c.spec.at(0).name == "charlson_comorbidity_index");
  CHECK(c.records[0].gender == Gender::female);
  CHECK(c.records[1].age_at_discharge == 55);
  CHECK(c.records[1].outcomes.mortality_90d);
  CHECK_FALSE(c.records[1].emr_features[0].has_value());
  CHECK(*c.records[2].emr_features[2] == 2.25);
  CHECK(c.records[0].note_text == "Discharge note for a.txt\n");

  write_cohort(c, tmp.path / "out" / "f.csv", tmp.path / "out" / "notes");
  Cohort again = load_cohort(tmp.path / "out" / "f.csv", tmp.path / "out" / "notes");
  CHECK(again.spec == c.spec);
  CHECK(again.records == c.records);
}

TEST_CASE("load_cohort errors name the offending row, column or path") {
  oracle::TempDir tmp("cohort-err");
  write_notes(tmp.path / "notes", {"a.txt", "b.txt"});
  auto load = [&](const std::string& body, LoadOptions opts = {}) {
    write_file(tmp.path / "f.csv", body);
    return load_cohort(tmp.path / "f.csv", tmp.path / "notes", opts);
  };

  CHECK_THROWS_WITH_AS(load(std::string(kHeader) + "p1,F,70,a.txt,0,0,1,3,0,1\n"
                                                    "p1,M,60,b.txt,0,0,0,3,0,1\n"),
                       doctest::Contains("p1"), DataError);
  CHECK_THROWS_WITH_AS(load(std::string(kHeader) + "p1,F,70,missing.txt,0,0,1,3,0,1\n"),
                       doctest::Contains("missing.txt"), DataError);
  CHECK_THROWS_WITH_AS(
      load("patient_id,gender,age_at_discharge,note_file,mortality_90d,mortality_1y,readmit_90d,"
           "mystery_lab\np1,F,70,a.txt,0,0,1,3\n"),
      doctest::Contains("mystery_lab"), DataError);
  CHECK_THROWS_WITH_AS(load(std::string(kHeader) + "p1,X,70,a.txt,0,0,1,3,0,1\n"),
                       doctest::Contains("gender"), DataError);
  CHECK_THROWS_WITH_AS(load(std::string(kHeader) + "p1,F,70,a.txt,0,0,1,3,0,abc\n"),
                       doctest::Contains("lactate_mean"), DataError);
  CHECK_THROWS_AS(load(std::string(kHeader) + "p1,F,70,a.txt,0,0,1,3,0\n"), DataError);
  CHECK_THROWS_WITH_AS(load(std::string(kHeader) + "p1,F,70,a.txt,1,0,1,3,0,1\n"),
                       doctest::Contains("mortality_1y"), DataError);
  CHECK_THROWS_AS(load(std::string(kHeader) + "p1,F,70,a.txt,0,0,1,3,2,1\n"), DataError);

  write_file(tmp.path / "notes" / "bad.txt", std::string("caf\xC3", 4));
  CHECK_THROWS_WITH_AS(load(std::string(kHeader) + "p1,F,70,bad.txt,0,0,1,3,0,1\n"),
                       doctest::Contains("UTF-8"), DataError);

  // Open schema accepts the unknown column.
  Cohort open = load(
      "patient_id,gender,age_at_discharge,note_file,mortality_90d,mortality_1y,readmit_90d,"
      "mystery_lab\np1,F,70,a.txt,0,0,1,3\n",
      {true});
  CHECK(open.spec.at(0).group == FeatureGroup::other);
}

TEST_CASE("impute_missing uses training medians only") {
  FeatureSpec spec({*find_registry_entry("lactate_mean"), *find_registry_entry("aids")});
  auto rec = [](std::string id, std::optional<double> lab, std::optional<double> flag) {
    PatientRecord r;
    r.patient_id = std::move(id);
    r.emr_features = {lab, flag};
    return r;
  };
  Cohort train{spec, {rec("a", 1.0, 1.0), rec("b", 3.0, std::nullopt), rec("c", 100.0, 0.0)}};
  Cohort test{spec, {rec("d", std::nullopt, std::nullopt), rec("e", 7.0, 1.0)}};

  // Median by direct sort of {1, 3, 100}.
  std::vector<double> observed = {100.0, 1.0, 3.0};
  std::sort(observed.begin(), observed.end());
  Cohort out = impute_missing(train, test);
  CHECK(*out.records[0].emr_features[0] == observed[1]);
  CHECK(*out.records[0].emr_features[1] == 0.0);
  CHECK(*out.records[1].emr_features[0] == 7.0);

  Cohort dense = impute_missing(train, train);
  CHECK(impute_missing(train, dense).records == dense.records);
  CHECK(impute_missing(train, out).records == out.records);

  // Test-set values never move the medians.
  Cohort test2 = test;
  test2.records[1].emr_features[0] = 1e9;
  CHECK(*impute_missing(train, test2).records[0].emr_features[0] == observed[1]);

  Cohort empty_train{spec, {rec("a", std::nullopt, 1.0)}};
  CHECK_THROWS_WITH_AS(impute_missing(empty_train, test), "no observed values for lactate_mean",
                       DataError);

  // Even medians average the two middle values.
  Cohort even{spec, {rec("a", 1.0, 0.0), rec("b", 4.0, 0.0)}};
  CHECK(*impute_missing(even, test).records[0].emr_features[0] == 2.5);
}

TEST_CASE("split_train_test is a seeded partition with floored train size") {
  Cohort c = generate_synthetic(10, 1);
  auto [train, test] = split_train_test(c, 0.7, 9);
  CHECK(train.records.size() == 7);
  CHECK(test.records.size() == 3);

  auto [train2, test2] = split_train_test(c, 0.7, 9);
  CHECK(train2.records == train.records);

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Cohort big = generate_synthetic(37 + seed, 2);
    double f = 0.1 + 0.025 * static_cast<double>(seed);
    auto [tr, te] = split_train_test(big, f, seed);
    CHECK(tr.records.size() ==
          static_cast<std::size_t>(std::floor(static_cast<double>(big.records.size()) * f)));
    std::set<std::string> ids;
    for (const auto& r : tr.records) ids.insert(r.patient_id);
    for (const auto& r : te.records) CHECK(ids.insert(r.patient_id).second);
    CHECK(ids.size() == big.records.size());
  }
  CHECK_THROWS_AS(split_train_test(c, 1.0, 1), ConfigError);
}

TEST_CASE("generate_synthetic is deterministic and carries one marker per note") {
  Cohort a = generate_synthetic(100, 7);
  Cohort b = generate_synthetic(100, 7);
  CHECK(a.records == b.records);
  CHECK_FALSE(generate_synthetic(100, 8).records == a.records);

  for (const auto& r : a.records) {
    std::size_t first = r.note_text.find(kSeverityMarker);
    REQUIRE(first != std::string::npos);
    CHECK(r.note_text.find(kSeverityMarker, first + 1) == std::string::npos);
    int u = std::stoi(r.note_text.substr(first + kSeverityMarker.size()));
    CHECK(u >= 1);
    CHECK(u <= 100);
    CHECK(r.outcomes.consistent());
  }
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("synthetic prevalence matches the logistic intercept when other terms vanish") {
  SynthConfig cfg;
  cfg.outcomes[0] = {-2.0, 0.0, 0.0};
  cfg.outcomes[1] = {-1.0, 0.0, 0.0};
  cfg.outcomes[2] = {0.5, 0.0, 0.0};
  const std::size_t n = 10000;
  Cohort c = generate_synthetic(n, 11, cfg);
  for (Outcome o : {Outcome::mortality_90d, Outcome::readmit_90d}) {
    double p = 1.0 / (1.0 + std::exp(-cfg.outcomes[static_cast<int>(o)].intercept));
    double rate = 0.0;
    for (const auto& r : c.records) rate += r.outcomes.get(o);
    rate /= static_cast<double>(n);
    // Four binomial standard errors.
    CHECK(std::abs(rate - p) < 4.0 * std::sqrt(p * (1 - p) / static_cast<double>(n)));
  }
  // The 1-year risk is floored at the 90-day risk, which is lower here.
  double rate_1y = 0.0;
  for (const auto& r : c.records) rate_1y += r.outcomes.mortality_1y;
  rate_1y /= static_cast<double>(n);
  double p1y = 1.0 / (1.0 + std::exp(1.0));
  CHECK(std::abs(rate_1y - p1y) < 4.0 * std::sqrt(p1y * (1 - p1y) / static_cast<double>(n)));
}
