#pragma once

// Published AUC (Table 1) and top-fraction PPV (Table 2) grids for the three
// outcomes, as fractions.

#include <vector>

#include "noterisk/metrics.hpp"

namespace reference {

struct Cell {
  noterisk::Outcome outcome;
  noterisk::FeatureSet feature_set;
  double auc;
  double ppv[4];  // at 2.5%, 5%, 10%, 20%
};

inline const std::vector<Cell>& cells() {
  using noterisk::FeatureSet;
  using noterisk::Outcome;
  static const std::vector<Cell> c = {
      {Outcome::mortality_90d, FeatureSet::emr, 0.843, {0.43, 0.31, 0.26, 0.18}},
      {Outcome::mortality_90d, FeatureSet::gpt, 0.864, {0.59, 0.45, 0.32, 0.20}},
      {Outcome::mortality_90d, FeatureSet::both, 0.884, {0.63, 0.49, 0.32, 0.21}},
      {Outcome::mortality_1y, FeatureSet::emr, 0.829, {0.58, 0.51, 0.43, 0.34}},
      {Outcome::mortality_1y, FeatureSet::gpt, 0.866, {0.77, 0.64, 0.52, 0.37}},
      {Outcome::mortality_1y, FeatureSet::both, 0.886, {0.78, 0.68, 0.55, 0.39}},
      {Outcome::readmit_90d, FeatureSet::emr, 0.666, {0.21, 0.17, 0.13, 0.11}},
      {Outcome::readmit_90d, FeatureSet::gpt, 0.711, {0.17, 0.18, 0.16, 0.16}},
      {Outcome::readmit_90d, FeatureSet::both, 0.720, {0.17, 0.16, 0.18, 0.16}},
  };
  return c;
}

inline std::vector<noterisk::EvalReport> reports() {
  std::vector<noterisk::EvalReport> out;
  for (const auto& c : cells()) {
    noterisk::EvalReport r;
    r.outcome = c.outcome;
    r.feature_set = c.feature_set;
    r.auc = c.auc;
    for (int i = 0; i < 4; ++i) r.ppv_at[noterisk::kPpvFractions[static_cast<std::size_t>(i)]] = c.ppv[i];
    out.push_back(r);
  }
  return out;
}

}  // namespace reference
