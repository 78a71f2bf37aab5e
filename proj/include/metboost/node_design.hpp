#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "metboost/tree.hpp"

namespace metboost {

// The indicator design implied by a fitted tree: per-row terminal node and
// group index, plus the (node, group) cell counts. The dense X~ (N x k) and
// the group-expanded Z~ (N x g*k, column g*k + j for group g, node j) are
// implied; materialize() builds them for oracle tests only.
struct NodeAssignment {
  std::vector<int> node;   // 0..k-1 per row
  std::vector<int> group;  // 0..g-1 per row
  int k = 0;
  int g = 0;
  std::vector<int> cell_count;  // k*g, node-major: [node*g + group]

  int cells() const { return k * g; }
  int count(int node_j, int group_i) const {
    return cell_count[static_cast<std::size_t>(node_j * g + group_i)];
  }
};

NodeAssignment node_design(const Tree& t, const FeatureMatrix& X, std::span<const int> groups,
                           int n_groups);

// Dense materialization (X~, Z~); guarded to test scale.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> materialize(const NodeAssignment& a);

}  // namespace metboost
