#include "metboost/node_design.hpp"

#include <stdexcept>

namespace metboost {

NodeAssignment node_design(const Tree& t, const FeatureMatrix& X, std::span<const int> groups,
                           int n_groups) {
  if (groups.size() != X.n_rows) {
    throw std::invalid_argument("node_design: groups length does not match rows");
  }
  NodeAssignment a;
  a.k = t.n_leaves;
  a.g = n_groups;
  a.node.resize(X.n_rows);
  a.group.assign(groups.begin(), groups.end());
  a.cell_count.assign(static_cast<std::size_t>(a.k) * static_cast<std::size_t>(a.g), 0);
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    const int j = t.assign_node(X, i);
    a.node[i] = j;
    ++a.cell_count[static_cast<std::size_t>(j * a.g + groups[i])];
  }
  return a;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> materialize(const NodeAssignment& a) {
  const std::size_t n = a.node.size();
  const std::size_t zcols = static_cast<std::size_t>(a.g) * static_cast<std::size_t>(a.k);
  if (n * static_cast<std::size_t>(a.k) + n * zcols > 50'000'000) {
    throw std::runtime_error("capacity error: dense materialization exceeds the test-scale guard");
  }
  Eigen::MatrixXd xt = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), a.k);
  Eigen::MatrixXd zt = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                             static_cast<Eigen::Index>(zcols));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    xt(row, a.node[i]) = 1.0;
    zt(row, static_cast<Eigen::Index>(a.group[i]) * a.k + a.node[i]) = 1.0;
  }
  return {std::move(xt), std::move(zt)};
}

}  // namespace metboost
