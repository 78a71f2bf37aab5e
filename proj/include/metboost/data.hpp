#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metboost/rng.hpp"

namespace metboost {

struct DataColumn {
  std::string name;
  bool categorical = false;
  std::vector<double> values;         // numeric value, or level code; NaN when missing
  std::vector<std::uint8_t> missing;  // 1 = missing
  std::vector<std::string> levels;    // categorical registry, first-appearance order
};

// Immutable after load; shared read-only across workers.
struct Dataset {
  std::string outcome_name;
  std::string id_name;
  std::vector<DataColumn> predictors;
  std::vector<double> outcome;           // complete and finite
  std::vector<int> group;                // 0-based index into group_labels
  std::vector<std::string> group_labels;
  std::vector<std::vector<int>> rows_by_group;

  std::size_t n_rows() const { return outcome.size(); }
  int n_groups() const { return static_cast<int>(group_labels.size()); }
  int n_predictors() const { return static_cast<int>(predictors.size()); }

  // Row subset that keeps the group and level registries intact (groups may
  // become empty); needed so fold models share codes with the full data.
  Dataset subset(std::span<const int> rows) const;

  void rebuild_group_index();
  void validate() const;
};

Dataset load_csv(const std::string& path, const std::string& outcome, const std::string& id,
                 const std::string& na_token = "NA");

// Writes [outcome, predictors..., id]; missing cells as na_token, continuous
// values as %.17g so a reload round-trips exactly.
void write_dataset_csv(const Dataset& d, const std::string& path,
                       const std::string& na_token = "NA");

struct FoldAssignment {
  std::vector<int> fold;  // 0-based fold per row
  int folds = 0;
  std::uint64_t seed = 0;
};

// Group-stratified K folds: each group's rows are spread round-robin after a
// seeded shuffle; pure function of (N, group labels, K, seed).
FoldAssignment make_folds(const Dataset& d, int folds, std::uint64_t seed);

// Without-replacement subsample, stratified per group: max(1, round(f*n_i))
// rows from group i. Returns ascending row indices.
std::vector<int> subsample(const Dataset& d, double fraction, Rng& rng);

}  // namespace metboost
