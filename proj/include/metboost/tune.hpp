#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "metboost/ensemble.hpp"

namespace metboost {

struct TuneGrid {
  std::vector<double> shrinkage{0.01};
  std::vector<int> depth{3};
  std::vector<int> min_node{20};
  int n_trees = 2500;
  int folds = 3;
  double bag_fraction = 0.5;
  int max_surrogates = 5;
  std::uint64_t seed = 0;
};

struct TuneCell {
  double shrinkage = 0.0;
  int depth = 0;
  int min_node = 0;
};

struct TuneResult {
  std::vector<TuneCell> cells;
  std::vector<std::vector<double>> curve;  // [cell][m]: mean CV MSE after m stages, m = 0..M
  int best_cell = -1;
  int best_m = 0;
  double best_mse = 0.0;
  BoostModel model;  // refit on all rows at the winning cell, truncated to best_m
};

// K-fold grid search. Fold fits use seed mix(grid.seed, cell, fold); the final
// refit uses fold index = K. Ties on CV error break toward smaller m, then
// smaller depth, shrinkage, min_node. cores > 1 parallelizes (cell x fold).
TuneResult cv_tune(const Dataset& d, const TuneGrid& grid, Mode mode, int cores = 1,
                   std::ostream* warnings = nullptr);

void write_tune_report(const TuneResult& t, const std::string& path);

}  // namespace metboost
