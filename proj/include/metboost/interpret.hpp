#pragma once

#include <string>
#include <vector>

#include "metboost/ensemble.hpp"

namespace metboost {

struct InfluenceEntry {
  std::string predictor;
  double score = 0.0;  // percent of total fit-time SSE reduction
};

struct InfluenceReport {
  std::vector<InfluenceEntry> entries;  // schema order
  bool group_excluded = false;
};

// Sum of split SSE reductions per predictor over all stages, normalized to
// 100. exclude_group zeroes the baseline's grouping column before normalizing
// so scores are comparable with metboost (which never splits on the group).
InfluenceReport relative_influence(const BoostModel& m, bool exclude_group = false);

struct MarginRow {
  std::string group;
  double x = 0.0;
  double yhat = 0.0;
};

// Observed-row profiles of yhat against one predictor, sorted by value within
// group; `groups` empty means all groups. Rows with the predictor missing are
// skipped.
std::vector<MarginRow> marginal_effects(const BoostModel& m, const Dataset& d,
                                        const std::string& predictor,
                                        const std::vector<std::string>& groups = {});

// var(random part) / var(total predictions) over d's rows; metboost only.
double variance_decomposition(const BoostModel& m, const Dataset& d);

void write_influence_csv(const InfluenceReport& r, const std::string& path);
void write_margins_csv(const std::vector<MarginRow>& rows, const std::string& path);

}  // namespace metboost
