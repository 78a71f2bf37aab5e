#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metboost/csv.hpp"
#include "metboost/data.hpp"
#include "metboost/mixed_node.hpp"
#include "metboost/tree.hpp"

namespace metboost {

enum class Mode { baseline, metboost };

const char* mode_name(Mode m);

struct BoostParams {
  int n_trees = 100;
  double shrinkage = 0.01;  // step size lambda
  TreeParams tree;
  double bag_fraction = 0.5;
  std::uint64_t seed = 0;

  // Test hooks. force_zero_between clamps every node's between-group variance
  // to zero; inject_group=false drops the baseline's grouping-variable column.
  bool force_zero_between = false;
  bool inject_group = true;
};

struct PredictorSchema {
  std::string name;
  bool categorical = false;
  std::vector<std::string> levels;
};

struct Stage {
  Tree tree;
  MixedTreeFit mixed;                 // metboost only (k > 0)
  std::vector<double> sse_reduction;  // per schema predictor
};

struct BoostModel {
  Mode mode = Mode::metboost;
  double init = 0.0;
  double shrinkage = 0.01;
  BoostParams params;
  std::string outcome_name, id_name;
  std::vector<PredictorSchema> predictors;  // baseline: injected group column last
  int group_col = -1;                       // schema index of the injected group column
  std::vector<std::string> group_labels;
  std::vector<Stage> stages;

  int n_stages() const { return static_cast<int>(stages.size()); }
};

// Columns aligned to a model's schema, plus per-row group index (-1 for
// labels unseen in training: the random part contributes 0 there).
struct PredictionFrame {
  FeatureMatrix X;
  std::vector<int> group_index;
  std::vector<std::vector<double>> storage;
  std::vector<std::vector<std::uint8_t>> miss;

  std::size_t n_rows() const { return X.n_rows; }
};

// Algorithm: r0 = y - ybar; per stage fit a tree to the bagged residuals and
// (metboost) re-fit its node means as a mixed model; update all rows by
// lambda times the stage fit.
BoostModel boost_baseline(const Dataset& d, const BoostParams& p);
BoostModel boost_metboost(const Dataset& d, const BoostParams& p);

PredictionFrame build_frame(const BoostModel& m, const Dataset& d);
PredictionFrame build_frame(const BoostModel& m, const CsvTable& t, const std::string& na_token);

// yhat = init + lambda * sum of the first n_stages stage fits; -1 = all.
std::vector<double> predict(const BoostModel& m, const PredictionFrame& f, int n_stages = -1);

// Per-stage contribution split into fixed (beta / leaf) and random (b) parts.
void predict_parts(const BoostModel& m, const PredictionFrame& f, std::vector<double>* fixed_part,
                   std::vector<double>* random_part);

// mse[m] = held-out MSE using the first m stages, m = 0..M.
std::vector<double> prediction_mse_curve(const BoostModel& m, const PredictionFrame& f,
                                         std::span<const double> y);

void save_model(const BoostModel& m, const std::string& path);
BoostModel load_model(const std::string& path);

}  // namespace metboost
