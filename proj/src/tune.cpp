#include "metboost/tune.hpp"

#include <atomic>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "metboost/csv.hpp"
#include "metboost/data.hpp"

namespace metboost {

namespace {

BoostParams cell_params(const TuneGrid& grid, const TuneCell& cell, int n_trees,
                        std::uint64_t seed) {
  BoostParams p;
  p.n_trees = n_trees;
  p.shrinkage = cell.shrinkage;
  p.tree.depth = cell.depth;
  p.tree.min_node = cell.min_node;
  p.tree.max_surrogates = grid.max_surrogates;
  p.bag_fraction = grid.bag_fraction;
  p.seed = seed;
  return p;
}

}  // namespace

TuneResult cv_tune(const Dataset& d, const TuneGrid& grid, Mode mode, int cores,
                   std::ostream* warnings) {
  if (grid.shrinkage.empty() || grid.depth.empty() || grid.min_node.empty()) {
    throw std::invalid_argument("parameter error: tuning grid has an empty candidate list");
  }
  if (grid.folds < 2) throw std::invalid_argument("parameter error: folds must be >= 2");
  if (grid.n_trees < 1) throw std::invalid_argument("parameter error: n_trees must be >= 1");

  TuneResult res;
  for (double s : grid.shrinkage) {
    for (int dep : grid.depth) {
      for (int mn : grid.min_node) res.cells.push_back({s, dep, mn});
    }
  }

  const FoldAssignment fa = make_folds(d, grid.folds, grid.seed);

  // fold row sets
  std::vector<std::vector<int>> train_rows(static_cast<std::size_t>(grid.folds));
  std::vector<std::vector<int>> test_rows(static_cast<std::size_t>(grid.folds));
  for (std::size_t i = 0; i < fa.fold.size(); ++i) {
    for (int f = 0; f < grid.folds; ++f) {
      (fa.fold[i] == f ? test_rows : train_rows)[static_cast<std::size_t>(f)].push_back(
          static_cast<int>(i));
    }
  }

  if (warnings != nullptr) {
    for (int f = 0; f < grid.folds; ++f) {
      std::vector<int> seen(static_cast<std::size_t>(d.n_groups()), 0);
      for (int row : train_rows[static_cast<std::size_t>(f)]) {
        seen[static_cast<std::size_t>(d.group[static_cast<std::size_t>(row)])] = 1;
      }
      for (int gi = 0; gi < d.n_groups(); ++gi) {
        if (!seen[static_cast<std::size_t>(gi)] &&
            !d.rows_by_group[static_cast<std::size_t>(gi)].empty()) {
          *warnings << "warning: group '" << d.group_labels[static_cast<std::size_t>(gi)]
                    << "' has no rows in training fold " << (f + 1)
                    << "; its held-out rows are predicted from the fixed part only\n";
        }
      }
    }
  }

  std::vector<Dataset> fold_train(static_cast<std::size_t>(grid.folds));
  std::vector<Dataset> fold_test(static_cast<std::size_t>(grid.folds));
  std::vector<std::vector<double>> fold_test_y(static_cast<std::size_t>(grid.folds));
  for (int f = 0; f < grid.folds; ++f) {
    fold_train[static_cast<std::size_t>(f)] = d.subset(train_rows[static_cast<std::size_t>(f)]);
    fold_test[static_cast<std::size_t>(f)] = d.subset(test_rows[static_cast<std::size_t>(f)]);
    fold_test_y[static_cast<std::size_t>(f)] = fold_test[static_cast<std::size_t>(f)].outcome;
  }

  const std::size_t n_cells = res.cells.size();
  const std::size_t n_tasks = n_cells * static_cast<std::size_t>(grid.folds);
  std::vector<std::vector<double>> task_curve(n_tasks);
  std::vector<std::string> task_error(n_tasks);

  std::atomic<std::size_t> next_task{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next_task.fetch_add(1);
      if (t >= n_tasks) return;
      const std::size_t ci = t / static_cast<std::size_t>(grid.folds);
      const int f = static_cast<int>(t % static_cast<std::size_t>(grid.folds));
      try {
        const BoostParams p = cell_params(grid, res.cells[ci], grid.n_trees,
                                          mix_seed(grid.seed, ci, static_cast<std::uint64_t>(f)));
        const Dataset& train = fold_train[static_cast<std::size_t>(f)];
        const BoostModel model =
            (mode == Mode::metboost) ? boost_metboost(train, p) : boost_baseline(train, p);
        const PredictionFrame frame = build_frame(model, fold_test[static_cast<std::size_t>(f)]);
        task_curve[t] = prediction_mse_curve(model, frame, fold_test_y[static_cast<std::size_t>(f)]);
      } catch (const std::exception& e) {
        task_error[t] = e.what();
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(cores, static_cast<int>(n_tasks)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (!task_error[t].empty()) {
      throw std::runtime_error("tuning error: cell " +
                               std::to_string(t / static_cast<std::size_t>(grid.folds) + 1) +
                               ", fold " +
                               std::to_string(t % static_cast<std::size_t>(grid.folds) + 1) +
                               ": " + task_error[t]);
    }
  }

  res.curve.assign(n_cells, std::vector<double>(static_cast<std::size_t>(grid.n_trees) + 1, 0.0));
  for (std::size_t ci = 0; ci < n_cells; ++ci) {
    for (int f = 0; f < grid.folds; ++f) {
      const auto& c = task_curve[ci * static_cast<std::size_t>(grid.folds) +
                                 static_cast<std::size_t>(f)];
      for (std::size_t m = 0; m < c.size(); ++m) res.curve[ci][m] += c[m];
    }
    for (double& v : res.curve[ci]) v /= static_cast<double>(grid.folds);
  }

  // argmin over (cell, m >= 1); ties toward smaller m, depth, shrinkage, min_node
  bool have = false;
  for (std::size_t ci = 0; ci < n_cells; ++ci) {
    for (int m = 1; m <= grid.n_trees; ++m) {
      const double v = res.curve[ci][static_cast<std::size_t>(m)];
      bool better = false;
      if (!have) {
        better = true;
      } else if (v != res.best_mse) {
        better = v < res.best_mse;
      } else {
        const TuneCell& a = res.cells[ci];
        const TuneCell& b = res.cells[static_cast<std::size_t>(res.best_cell)];
        if (m != res.best_m) better = m < res.best_m;
        else if (a.depth != b.depth) better = a.depth < b.depth;
        else if (a.shrinkage != b.shrinkage) better = a.shrinkage < b.shrinkage;
        else if (a.min_node != b.min_node) better = a.min_node < b.min_node;
      }
      if (better) {
        have = true;
        res.best_mse = v;
        res.best_cell = static_cast<int>(ci);
        res.best_m = m;
      }
    }
  }

  const BoostParams final_params =
      cell_params(grid, res.cells[static_cast<std::size_t>(res.best_cell)], res.best_m,
                  mix_seed(grid.seed, static_cast<std::uint64_t>(res.best_cell),
                           static_cast<std::uint64_t>(grid.folds)));
  res.model = (mode == Mode::metboost) ? boost_metboost(d, final_params)
                                       : boost_baseline(d, final_params);
  return res;
}

void write_tune_report(const TuneResult& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io error: cannot write " + path);
  out << "cell,shrinkage,depth,min_node,m,mean_cv_mse\n";
  for (std::size_t ci = 0; ci < t.cells.size(); ++ci) {
    for (std::size_t m = 1; m < t.curve[ci].size(); ++m) {
      out << (ci + 1) << ',' << format_double(t.cells[ci].shrinkage) << ',' << t.cells[ci].depth
          << ',' << t.cells[ci].min_node << ',' << m << ',' << format_double(t.curve[ci][m])
          << '\n';
    }
  }
}

}  // namespace metboost
