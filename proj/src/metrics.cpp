#include "noterisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "noterisk/error.hpp"

namespace noterisk {

ScoredSet::ScoredSet(std::vector<ScoredEntry> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string> ids;
  for (const auto& e : entries_) {
    if (!std::isfinite(e.score) || e.score < 0.0 || e.score > 1.0) {
      throw DataError("score for '" + e.patient_id + "' is not a finite value in [0, 1]");
    }
    if (!ids.insert(e.patient_id).second) {
      throw DataError("duplicate patient_id '" + e.patient_id + "' in scored set");
    }
  }
  std::sort(entries_.begin(), entries_.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.patient_id < b.patient_id;
  });
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.label; }));
}

double ScoredSet::prevalence() const {
  if (entries_.empty()) return 0.0;
  return static_cast<double>(positives()) / static_cast<double>(entries_.size());
}

const ScoredEntry* ScoredSet::find(const std::string& patient_id) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const auto& e) { return e.patient_id == patient_id; });
  return it == entries_.end() ? nullptr : &*it;
}

double auc(const ScoredSet& s) {
  const auto& e = s.entries();
  const std::uint64_t pos = s.positives();
  const std::uint64_t neg = e.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("AUC needs both positive and negative entries");

  // Entries are sorted by score descending; walk tie blocks from the bottom so
  // rank 1 is the lowest score. Doubled mid-ranks keep everything integral.
  std::uint64_t doubled_rank_sum = 0;
  std::size_t end = e.size();
  std::uint64_t below = 0;
  while (end > 0) {
    std::size_t begin = end - 1;
    while (begin > 0 && e[begin - 1].score == e[end - 1].score) --begin;
    std::uint64_t block = end - begin;
    std::uint64_t doubled_mid = 2 * below + block + 1;
    for (std::size_t i = begin; i < end; ++i) {
      if (e[i].label) doubled_rank_sum += doubled_mid;
    }
    below += block;
    end = begin;
  }
  const std::uint64_t doubled_u = doubled_rank_sum - pos * (pos + 1);
  return static_cast<double>(doubled_u) / static_cast<double>(2 * pos * neg);
}

double error_rate(const ScoredSet& s, double threshold) {
  if (s.size() == 0) return 0.0;
  std::size_t wrong = 0;
  for (const auto& e : s.entries()) {
    if ((e.score >= threshold) != e.label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(s.size());
}

std::size_t top_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("top fraction must lie in (0, 1]");
  // The epsilon keeps products like 0.1 * 40 = 4.000000000000001 at 4.
  double k = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 0.0)), 1, n);
}

double ppv_at_top(const ScoredSet& s, double fraction) {
  if (s.size() == 0) throw DataError("PPV needs at least one entry");
  std::size_t k = top_count(s.size(), fraction);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += s.entries()[i].label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double difference_pp(double auc_a, double auc_b) { return (auc_a - auc_b) * 100.0; }

SubgroupAuc subgroup_auc(const ScoredSet& s, const std::map<std::string, std::string>& groups,
                         const std::vector<std::string>& order) {
  std::map<std::string, std::vector<ScoredEntry>> members;
  for (const auto& e : s.entries()) {
    auto it = groups.find(e.patient_id);
    if (it == groups.end()) throw DataError("patient '" + e.patient_id + "' has no group");
    members[it->second].push_back(e);
  }
  SubgroupAuc out;
  if (order.empty()) {
    for (const auto& [name, _] : members) out.groups.push_back(name);
  } else {
    out.groups = order;
  }
  for (const auto& g : out.groups) {
    auto it = members.find(g);
    std::optional<double> value;
    if (it != members.end()) {
      ScoredSet sub(it->second);
      std::size_t pos = sub.positives();
      if (pos > 0 && pos < sub.size()) value = auc(sub);
    }
    out.auc[g] = value;
  }
  for (std::size_t a = 0; a < out.groups.size(); ++a) {
    for (std::size_t b = a + 1; b < out.groups.size(); ++b) {
      const auto& va = out.auc[out.groups[a]];
      const auto& vb = out.auc[out.groups[b]];
      std::optional<double> pp;
      if (va && vb) pp = difference_pp(*va, *vb);
      out.differences.push_back({out.groups[a], out.groups[b], pp});
    }
  }
  return out;
}

std::vector<CalibrationBin> risk_bin_calibration(
    const std::map<std::string, GptAnswers>& answers, const std::map<std::string, bool>& labels) {
  if (answers.size() != labels.size()) {
    throw DataError("calibration: answers and labels cover different patients");
  }
  std::map<int, std::pair<std::size_t, std::size_t>> bins;  // score -> (n, events)
  for (const auto& [id, a] : answers) {
    auto it = labels.find(id);
    if (it == labels.end()) throw DataError("calibration: no label for '" + id + "'");
    auto& bin = bins[a.risk_death];
    ++bin.first;
    if (it->second) ++bin.second;
  }
  std::vector<CalibrationBin> out;
  for (const auto& [score, counts] : bins) {
    out.push_back({score, counts.first,
                   static_cast<double>(counts.second) / static_cast<double>(counts.first)});
  }
  return out;
}

namespace {

// Pairs each entry of `a` with the same patient in `b`.
std::vector<std::pair<const ScoredEntry*, const ScoredEntry*>> match(const ScoredSet& a,
                                                                      const ScoredSet& b) {
  if (a.size() != b.size()) throw DataError("scored sets cover different patients");
  std::unordered_map<std::string_view, const ScoredEntry*> index;
  for (const auto& e : b.entries()) index.emplace(e.patient_id, &e);
  std::vector<std::pair<const ScoredEntry*, const ScoredEntry*>> pairs;
  pairs.reserve(a.size());
  for (const auto& e : a.entries()) {
    auto it = index.find(e.patient_id);
    if (it == index.end()) throw DataError("patient '" + e.patient_id + "' missing from second set");
    pairs.emplace_back(&e, it->second);
  }
  return pairs;
}

}  // namespace

double score_correlation(const ScoredSet& a, const ScoredSet& b) {
  auto pairs = match(a, b);
  if (pairs.size() < 2) throw DataError("correlation needs at least 2 patients");
  const double n = static_cast<double>(pairs.size());
  double ma = 0.0, mb = 0.0;
  for (const auto& [x, y] : pairs) {
    ma += x->score;
    mb += y->score;
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (const auto& [x, y] : pairs) {
    double da = x->score - ma;
    double db = y->score - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw DataError("correlation undefined for a constant score vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

DivergenceReport divergence_report(const ScoredSet& a, const ScoredSet& b, std::size_t top_k) {
  auto pairs = match(a, b);
  std::vector<DivergenceEntry> all;
  all.reserve(pairs.size());
  for (const auto& [x, y] : pairs) {
    all.push_back({x->patient_id, x->score, y->score, y->score - x->score});
  }
  top_k = std::min(top_k, all.size());
  DivergenceReport out;
  auto by_id = [](const DivergenceEntry& l, const DivergenceEntry& r) {
    return l.patient_id < r.patient_id;
  };
  auto ranked = all;
  std::sort(ranked.begin(), ranked.end(), [&](const auto& l, const auto& r) {
    return l.delta != r.delta ? l.delta > r.delta : by_id(l, r);
  });
  out.largest_increase.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top_k));
  std::sort(ranked.begin(), ranked.end(), [&](const auto& l, const auto& r) {
    return l.delta != r.delta ? l.delta < r.delta : by_id(l, r);
  });
  out.largest_decrease.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top_k));
  return out;
}

std::string_view to_string(FeatureSet set) {
  switch (set) {
    case FeatureSet::emr: return "emr";
    case FeatureSet::gpt: return "gpt";
    case FeatureSet::both: return "both";
  }
  return "unknown";
}

FeatureSet parse_feature_set(std::string_view name) {
  for (FeatureSet f : kAllFeatureSets) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown feature set '" + std::string(name) + "' (expected emr, gpt or both)");
}

EvalReport evaluate(Outcome outcome, FeatureSet feature_set, const ScoredSet& s,
                    const std::map<std::string, std::map<std::string, std::string>>& groups) {
  EvalReport r;
  r.outcome = outcome;
  r.feature_set = feature_set;
  r.auc = auc(s);
  r.error_rate = error_rate(s, 0.5);
  for (double f : kPpvFractions) r.ppv_at[f] = ppv_at_top(s, f);
  for (const auto& [dimension, assignment] : groups) {
    auto sub = subgroup_auc(s, assignment);
    for (const auto& [group, value] : sub.auc) r.subgroup_auc[dimension + ":" + group] = value;
  }
  return r;
}

SummaryDeltas compute_summary_deltas(const std::vector<EvalReport>& reports) {
  std::map<Outcome, const EvalReport*> emr, both;
  std::set<Outcome> outcomes;
  for (const auto& r : reports) {
    outcomes.insert(r.outcome);
    if (r.feature_set == FeatureSet::emr) emr[r.outcome] = &r;
    if (r.feature_set == FeatureSet::both) both[r.outcome] = &r;
  }
  if (outcomes.empty()) throw DataError("no reports to summarize");
  SummaryDeltas out;
  for (Outcome o : outcomes) {
    if (!emr.contains(o) || !both.contains(o)) {
      throw DataError("summary needs emr and both reports for outcome " + std::string(to_string(o)));
    }
    const auto& e = *emr[o];
    const auto& b = *both[o];
    out.avg_auc_gain_pp += (b.auc - e.auc) * 100.0;
    double ppv_e = e.ppv_at.at(0.10);
    double ppv_b = b.ppv_at.at(0.10);
    if (ppv_e == 0.0) {
      throw DataError("relative PPV gain undefined: emr PPV at 10% is zero for " +
                      std::string(to_string(o)));
    }
    out.avg_rel_ppv_gain_decile += (ppv_b - ppv_e) / ppv_e;
  }
  out.avg_auc_gain_pp /= static_cast<double>(outcomes.size());
  out.avg_rel_ppv_gain_decile /= static_cast<double>(outcomes.size());
  return out;
}

}  // namespace noterisk
