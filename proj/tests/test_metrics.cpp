#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "noterisk/error.hpp"
#include "noterisk/metrics.hpp"
#include "oracles.hpp"
#include "reference_tables.hpp"

using namespace noterisk;

namespace {

ScoredSet make(std::vector<double> scores, std::vector<int> labels) {
  std::vector<ScoredEntry> e;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    e.push_back({"p" + std::to_string(i), scores[i], labels[i] == 1});
  }
  return ScoredSet(e);
}

std::vector<ScoredEntry> random_entries(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> level(0, levels);
  std::bernoulli_distribution coin(0.4);
  std::vector<ScoredEntry> e;
  for (std::size_t i = 0; i < n; ++i) {
    e.push_back({"id" + std::to_string(1000 + rng() % 9000) + "-" + std::to_string(i),
                 static_cast<double>(level(rng)) / levels, coin(rng)});
  }
  return e;
}

}  // namespace

TEST_CASE("ScoredSet ordering and validation") {
  auto s = make({0.2, 0.9, 0.2}, {0, 1, 1});
  CHECK(s.entries()[0].patient_id == "p1");
  CHECK(s.entries()[1].patient_id == "p0");
  CHECK(s.entries()[2].patient_id == "p2");
  CHECK(s.positives() == 2);
  CHECK(s.find("p2")->label);
  CHECK(s.find("nope") == nullptr);
  CHECK_THROWS_AS(ScoredSet({{"a", 0.1, true}, {"a", 0.2, false}}), DataError);
  CHECK_THROWS_AS(ScoredSet({{"a", 1.5, true}}), DataError);
  CHECK_THROWS_AS(ScoredSet({{"a", NAN, true}}), DataError);
}

TEST_CASE("auc examples") {
  CHECK(auc(make({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})) == 1.0);
  CHECK(auc(make({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0})) == 0.5);
  CHECK(auc(make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})) == 0.75);
  CHECK_THROWS_AS(auc(make({0.1, 0.2}, {1, 1})), DataError);
}

TEST_CASE("auc equals pairwise counting exactly") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    auto e = random_entries(rng, 2 + rng() % 29, 1 + t % 10);
    ScoredSet s(e);
    if (s.positives() == 0 || s.positives() == s.size()) continue;
    CHECK(auc(s) == oracle::auc(e));
  }
}

TEST_CASE("auc properties") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    auto e = random_entries(rng, 25, 6);
    ScoredSet s(e);
    if (s.positives() == 0 || s.positives() == s.size()) continue;
    auto flipped = e;
    for (auto& x : flipped) x.label = !x.label;
    CHECK(auc(ScoredSet(flipped)) == doctest::Approx(1.0 - auc(s)).epsilon(1e-15));
    auto squashed = e;
    for (auto& x : squashed) x.score = x.score * x.score * 0.5;
    CHECK(auc(ScoredSet(squashed)) == auc(s));
  }
}

TEST_CASE("error_rate") {
  CHECK(error_rate(make({0.6, 0.4}, {1, 0}), 0.5) == 0.0);
  CHECK(error_rate(make({0.6, 0.4}, {0, 1}), 0.5) == 1.0);
  auto s = make({0.1, 0.2, 0.3, 0.9}, {1, 0, 0, 0});
  CHECK(error_rate(s, 0.0) == 0.75);
  CHECK(error_rate(make({0.5}, {1})) == 0.0);

  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    auto e = random_entries(rng, 1 + rng() % 30, 8);
    CHECK(error_rate(ScoredSet(e), 0.5) == oracle::error_rate(e, 0.5));
  }
}

TEST_CASE("ppv_at_top") {
  CHECK(top_count(40, 0.10) == 4);
  CHECK(top_count(100, 0.025) == 3);
  CHECK(top_count(10, 0.025) == 1);
  CHECK(top_count(7, 1.0) == 7);

  std::vector<double> scores(40);
  std::vector<int> labels(40, 0);
  for (int i = 0; i < 40; ++i) scores[static_cast<std::size_t>(i)] = 1.0 - i / 40.0;
  labels[0] = labels[1] = labels[3] = 1;
  labels[10] = 1;
  auto s = make(scores, labels);
  CHECK(ppv_at_top(s, 0.10) == 0.75);
  CHECK(ppv_at_top(s, 1.0) == s.prevalence());
  CHECK(ppv_at_top(make({0.1, 0.3, 0.2}, {1, 1, 1}), 0.025) == 1.0);

  std::mt19937_64 rng(4);
  const int per_mille[] = {25, 50, 100, 200, 1000, 333};
  for (int t = 0; t < 600; ++t) {
    auto e = random_entries(rng, 1 + rng() % 60, 5);
    int pm = per_mille[t % 6];
    CHECK(ppv_at_top(ScoredSet(e), pm / 1000.0) == oracle::ppv_at_top(e, pm));
  }

  // Nested cutoffs select nested sets when scores are distinct.
  for (double f1 : kPpvFractions) {
    for (double f2 : kPpvFractions) {
      if (f1 < f2) CHECK(top_count(333, f1) <= top_count(333, f2));
    }
  }
}

TEST_CASE("subgroup_auc") {
  auto s = make({0.9, 0.1, 0.9, 0.1, 0.5, 0.4}, {1, 0, 1, 0, 1, 1});
  std::map<std::string, std::string> g = {{"p0", "a"}, {"p1", "a"}, {"p2", "b"},
                                          {"p3", "b"}, {"p4", "c"}, {"p5", "c"}};
  auto r = subgroup_auc(s, g, {"a", "b", "c"});
  CHECK(*r.auc.at("a") == 1.0);
  CHECK(*r.auc.at("b") == 1.0);
  CHECK_FALSE(r.auc.at("c").has_value());
  REQUIRE(r.differences.size() == 3);
  CHECK(*r.differences[0].pp == 0.0);
  CHECK_FALSE(r.differences[1].pp.has_value());

  g.erase("p5");
  CHECK_THROWS_AS(subgroup_auc(s, g), DataError);

  CHECK(difference_pp(0.845, 0.876) == doctest::Approx(-3.1).epsilon(1e-9));
}

TEST_CASE("risk_bin_calibration") {
  std::map<std::string, GptAnswers> a;
  std::map<std::string, bool> y;
  for (int i = 0; i < 10; ++i) {
    a["p" + std::to_string(i)] = {50, 1, 1};
    y["p" + std::to_string(i)] = i % 2 == 0;
  }
  auto bins = risk_bin_calibration(a, y);
  REQUIRE(bins.size() == 1);
  CHECK(bins[0].gpt_score == 50);
  CHECK(bins[0].n == 10);
  CHECK(bins[0].event_rate == 0.5);

  a["q"] = {20, 1, 1};
  y["q"] = true;
  bins = risk_bin_calibration(a, y);
  CHECK(bins.front().gpt_score == 20);
  std::size_t total = 0;
  for (const auto& b : bins) total += b.n;
  CHECK(total == 11);

  y.erase("q");
  CHECK_THROWS_AS(risk_bin_calibration(a, y), DataError);
}

TEST_CASE("score_correlation") {
  auto a = make({0.1, 0.2, 0.3}, {0, 1, 0});
  CHECK(score_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  auto b = make({0.9, 0.8, 0.7}, {0, 1, 0});
  CHECK(score_correlation(a, b) == doctest::Approx(-1.0).epsilon(1e-15));
  auto c = make({0.1, 0.2, 0.4}, {0, 1, 0});
  // Direct arithmetic on [1,2,3] and [1,2,4]: sxy = 3, sxx = 2, syy = 14/3.
  CHECK(score_correlation(a, c) == doctest::Approx(3.0 / std::sqrt(2.0 * 14.0 / 3.0)).epsilon(1e-12));
  CHECK(score_correlation(a, c) == doctest::Approx(0.98198050606).epsilon(1e-10));
  CHECK_THROWS_AS(score_correlation(a, make({0.5, 0.5, 0.5}, {0, 1, 0})), DataError);
  CHECK_THROWS_AS(score_correlation(a, make({0.5, 0.6}, {0, 1})), DataError);
}

TEST_CASE("divergence_report") {
  auto a = make({0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 1});
  auto r = divergence_report(a, a, 2);
  REQUIRE(r.largest_increase.size() == 2);
  CHECK(r.largest_increase[0].patient_id == "p0");
  CHECK(r.largest_increase[1].patient_id == "p1");
  CHECK(r.largest_decrease[0].patient_id == "p0");
  CHECK(r.largest_increase[0].delta == 0.0);

  auto b = make({0.1, 0.7, 0.3, 0.1}, {0, 1, 0, 1});
  r = divergence_report(a, b, 10);
  CHECK(r.largest_increase.size() == 4);
  CHECK(r.largest_increase[0].patient_id == "p1");
  CHECK(r.largest_increase[0].delta == doctest::Approx(0.5));
  CHECK(r.largest_decrease[0].patient_id == "p3");

  r = divergence_report(a, b, 0);
  CHECK(r.largest_increase.empty());
  CHECK(r.largest_decrease.empty());
  CHECK_THROWS_AS(divergence_report(a, make({0.1}, {0}), 1), DataError);
}

TEST_CASE("summary deltas from the reference grids") {
  auto d = compute_summary_deltas(reference::reports());
  // mean of 5.7, 4.1, 5.4
  CHECK(d.avg_auc_gain_pp == doctest::Approx((5.7 + 4.1 + 5.4) / 3.0).epsilon(1e-12));
  CHECK(std::abs(d.avg_auc_gain_pp - 5.1) <= 0.05);
  // mean of 6/26, 12/43, 5/13
  CHECK(d.avg_rel_ppv_gain_decile ==
        doctest::Approx((6.0 / 26 + 12.0 / 43 + 5.0 / 13) / 3.0).epsilon(1e-12));
  CHECK(std::abs(d.avg_rel_ppv_gain_decile * 100 - 29.8) <= 0.1);

  std::vector<EvalReport> same;
  for (auto r : reference::reports()) {
    if (r.feature_set == FeatureSet::both) continue;
    same.push_back(r);
    if (r.feature_set == FeatureSet::emr) {
      r.feature_set = FeatureSet::both;
      same.push_back(r);
    }
  }
  auto zero = compute_summary_deltas(same);
  CHECK(zero.avg_auc_gain_pp == 0.0);
  CHECK(zero.avg_rel_ppv_gain_decile == 0.0);

  auto missing = reference::reports();
  missing.pop_back();
  CHECK_THROWS_WITH_AS(compute_summary_deltas(missing), doctest::Contains("readmit_90d"), DataError);
}

TEST_CASE("evaluate bundles every metric") {
  std::mt19937_64 rng(5);
  auto e = random_entries(rng, 200, 50);
  ScoredSet s(e);
  std::map<std::string, std::map<std::string, std::string>> groups;
  for (const auto& x : e) groups["gender"][x.patient_id] = x.score > 0.5 ? "female" : "male";
  auto r = evaluate(Outcome::mortality_1y, FeatureSet::gpt, s, groups);
  CHECK(r.auc == auc(s));
  CHECK(r.error_rate == error_rate(s));
  CHECK(r.ppv_at.size() == 4);
  CHECK(r.ppv_at.at(0.10) == ppv_at_top(s, 0.10));
  CHECK(r.subgroup_auc.contains("gender:female"));
  CHECK(r.subgroup_auc.contains("gender:male"));
}
