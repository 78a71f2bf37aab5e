#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace metboost {

// Column view over predictor storage. Categorical values are level codes;
// codes outside [0, n_levels) never occur at fit time but may at predict time
// (unseen levels), where they route like missing values.
struct FeatureColumn {
  std::string name;
  bool categorical = false;
  int n_levels = 0;
  const double* values = nullptr;
  const std::uint8_t* missing = nullptr;  // may be null (fully observed)
};

struct FeatureMatrix {
  std::vector<FeatureColumn> cols;
  std::size_t n_rows = 0;
  bool any_missing = false;

  bool missing_at(int c, std::size_t i) const {
    const std::uint8_t* m = cols[static_cast<std::size_t>(c)].missing;
    return m != nullptr && m[i] != 0;
  }
  double at(int c, std::size_t i) const { return cols[static_cast<std::size_t>(c)].values[i]; }
  void compute_any_missing();
};

enum : std::int8_t { kDirLeft = -1, kDirUnseen = 0, kDirRight = 1 };

struct SplitRule {
  int col = -1;
  bool categorical = false;
  double threshold = 0.0;                  // continuous: v < threshold goes left
  std::vector<std::int8_t> level_dir;      // categorical: direction per level code

  // Direction for an observed value; kDirUnseen for a level this split never
  // saw at fit time (falls through to surrogates/default).
  std::int8_t route(double v) const {
    if (!categorical) return v < threshold ? kDirLeft : kDirRight;
    const int code = static_cast<int>(v);
    if (code < 0 || code >= static_cast<int>(level_dir.size())) return kDirUnseen;
    return level_dir[static_cast<std::size_t>(code)];
  }
};

struct Surrogate {
  SplitRule rule;
  bool swap = false;       // continuous only: flip direction to align with the primary
  double agreement = 0.0;  // fraction of comparable fit rows routed like the primary
};

struct TreeNode {
  int left = -1, right = -1;  // leaf iff left < 0
  SplitRule split;
  std::vector<Surrogate> surrogates;
  bool default_left = true;
  double sse_reduction = 0.0;  // split gain on the scored (non-missing) rows
  double value = 0.0;          // mean response of training rows in the node
  int count = 0;
  int leaf_index = -1;         // 0..k-1, left-to-right

  bool is_leaf() const { return left < 0; }
};

struct TreeParams {
  int depth = 3;          // max root-to-leaf edge count; 1 = a single split
  int min_node = 20;      // both children of any split must hold at least this many rows
  int max_surrogates = 5;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root; pre-order
  int n_leaves = 0;

  // Total routing: primary rule, then surrogates in agreement order, then the
  // fit-time majority direction. Returns the terminal node index.
  int assign_node(const FeatureMatrix& X, std::size_t row) const;
  double predict_row(const FeatureMatrix& X, std::size_t row) const;

  // Split gains summed per predictor column into `out` (size = #columns).
  void accumulate_sse_reduction(std::span<double> out) const;
};

// Greedy least-squares recursive partitioning with agreement-ranked surrogate
// splits. `rows` indexes into X/response; response must be finite on rows.
Tree fit_tree(const FeatureMatrix& X, std::span<const double> response,
              std::span<const int> rows, const TreeParams& params);

std::vector<double> predict_tree(const Tree& t, const FeatureMatrix& X);

}  // namespace metboost
