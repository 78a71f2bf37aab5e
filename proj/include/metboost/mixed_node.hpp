#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "metboost/node_design.hpp"

namespace metboost {

struct VarianceComponents {
  double between = 0.0;  // sigma^2_alpha, >= 0
  double within = 0.0;   // sigma^2, floored positive
};

// Per-group summary of one terminal node's responses.
struct CellStats {
  int group = 0;
  int count = 0;
  double mean = 0.0;
  double sse = 0.0;  // within-cell sum of squared deviations
};

// Unbalanced one-way method-of-moments estimator. `cells` holds the occupied
// cells of one node; var_floor keeps the within variance positive.
VarianceComponents estimate_components(std::span<const CellStats> cells, double var_floor);

// omega = between / (between + within / n); 0 when n == 0.
double shrinkage_weight(double between, double within, int n);

struct MixedTreeFit {
  int k = 0;
  int g = 0;
  std::vector<double> beta;                // k node means
  std::vector<double> b;                   // k*g deviations, node-major; 0 for unoccupied cells
  std::vector<double> omega;               // k*g shrinkage weights
  std::vector<VarianceComponents> comps;   // per node

  double cell_b(int node, int group) const {
    return b[static_cast<std::size_t>(node * g + group)];
  }
};

// Fits r = X~ beta + Z~ b + eps per node via closed-form shrinkage. Statistics
// come from `rows` (the estimation subset); pass all rows for a full fit.
MixedTreeFit fit_mixed_tree(const NodeAssignment& a, std::span<const double> r,
                            std::span<const int> rows, bool force_zero_between = false);
MixedTreeFit fit_mixed_tree(const NodeAssignment& a, std::span<const double> r);

// Same solve with variance components supplied instead of estimated.
MixedTreeFit fit_mixed_tree_plugged(const NodeAssignment& a, std::span<const double> r,
                                    std::span<const int> rows,
                                    std::span<const VarianceComponents> comps);

// Dense Henderson block system [[X'X, X'Z], [Z'X, Z'Z + sigma2 * Psi^-1]] for
// designs from materialize(); psi is the k x k per-group random-effect
// covariance, expanded block-diagonally over groups. Test scale only.
std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_henderson(const Eigen::MatrixXd& xt,
                                                            const Eigen::MatrixXd& zt,
                                                            const Eigen::MatrixXd& psi,
                                                            double sigma2,
                                                            const Eigen::VectorXd& r);

}  // namespace metboost
