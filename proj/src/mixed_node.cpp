#include "metboost/mixed_node.hpp"

#include <cmath>
#include <stdexcept>

#include "metboost/kernels.hpp"

namespace metboost {

namespace {
constexpr double kFloorScale = 1e-8;
constexpr double kFloorAbs = 1e-12;
}  // namespace

VarianceComponents estimate_components(std::span<const CellStats> cells, double var_floor) {
  if (cells.empty()) throw std::invalid_argument("estimate_components: empty node");

  double n_total = 0.0, grand_sum = 0.0, ssw = 0.0, sum_n2 = 0.0;
  for (const CellStats& c : cells) {
    n_total += c.count;
    grand_sum += c.mean * c.count;
    ssw += c.sse;
    sum_n2 += static_cast<double>(c.count) * c.count;
  }
  const double gj = static_cast<double>(cells.size());

  VarianceComponents out;
  if (cells.size() == 1 || n_total == gj) {
    // Single group, or all-singleton cells: no between-group information.
    out.between = 0.0;
    const double within_raw =
        (cells.size() == 1 && n_total > 1.0) ? ssw / (n_total - 1.0) : 0.0;
    out.within = std::max(within_raw, var_floor);
    return out;
  }

  const double grand = grand_sum / n_total;
  double ssb = 0.0;
  for (const CellStats& c : cells) {
    const double d = c.mean - grand;
    ssb += c.count * d * d;
  }
  const double within_raw = ssw / (n_total - gj);
  const double msb = ssb / (gj - 1.0);
  const double n0 = (n_total - sum_n2 / n_total) / (gj - 1.0);
  out.between = std::max(0.0, (msb - within_raw) / n0);
  out.within = std::max(within_raw, var_floor);
  return out;
}

double shrinkage_weight(double between, double within, int n) {
  if (n <= 0) return 0.0;
  if (between <= 0.0) return 0.0;
  return between / (between + within / static_cast<double>(n));
}

namespace {

struct CellTable {
  // node-major k*g tables over the estimation rows
  std::vector<int> count;
  std::vector<double> sum;
  std::vector<double> sse;
  int k = 0, g = 0;

  CellTable(const NodeAssignment& a, std::span<const double> r, std::span<const int> rows) {
    k = a.k;
    g = a.g;
    const std::size_t cells = static_cast<std::size_t>(k) * static_cast<std::size_t>(g);
    count.assign(cells, 0);
    sum.assign(cells, 0.0);
    sse.assign(cells, 0.0);
    for (int row : rows) {
      const auto i = static_cast<std::size_t>(row);
      const std::size_t c = static_cast<std::size_t>(a.node[i] * g + a.group[i]);
      ++count[c];
      sum[c] += r[i];
    }
    for (int row : rows) {
      const auto i = static_cast<std::size_t>(row);
      const std::size_t c = static_cast<std::size_t>(a.node[i] * g + a.group[i]);
      const double d = r[i] - sum[c] / count[c];
      sse[c] += d * d;
    }
  }

  std::vector<CellStats> node_cells(int j) const {
    std::vector<CellStats> out;
    for (int gi = 0; gi < g; ++gi) {
      const std::size_t c = static_cast<std::size_t>(j * g + gi);
      if (count[c] == 0) continue;
      out.push_back({gi, count[c], sum[c] / count[c], sse[c]});
    }
    return out;
  }
};

MixedTreeFit solve_cells(const NodeAssignment& a, const CellTable& table,
                         std::span<const VarianceComponents> comps) {
  MixedTreeFit fit;
  fit.k = a.k;
  fit.g = a.g;
  fit.comps.assign(comps.begin(), comps.end());
  fit.beta.assign(static_cast<std::size_t>(a.k), 0.0);
  fit.b.assign(static_cast<std::size_t>(a.k) * static_cast<std::size_t>(a.g), 0.0);
  fit.omega.assign(fit.b.size(), 0.0);

  for (int j = 0; j < a.k; ++j) {
    const VarianceComponents& vc = comps[static_cast<std::size_t>(j)];
    // beta_j: precision-weighted mean of cell means, w = 1/(between + within/n);
    // reduces to the plain node mean when between = 0.
    double wsum = 0.0, wmean = 0.0;
    bool occupied = false;
    for (int gi = 0; gi < a.g; ++gi) {
      const std::size_t c = static_cast<std::size_t>(j * a.g + gi);
      const int n = table.count[c];
      if (n == 0) continue;
      occupied = true;
      const double w = 1.0 / (vc.between + vc.within / n);
      wsum += w;
      wmean += w * (table.sum[c] / n);
    }
    if (!occupied) continue;  // node unseen in the estimation rows; beta stays 0
    const double beta = wmean / wsum;
    fit.beta[static_cast<std::size_t>(j)] = beta;
    for (int gi = 0; gi < a.g; ++gi) {
      const std::size_t c = static_cast<std::size_t>(j * a.g + gi);
      const int n = table.count[c];
      if (n == 0) continue;
      const double w = shrinkage_weight(vc.between, vc.within, n);
      fit.omega[c] = w;
      fit.b[c] = w * (table.sum[c] / n - beta);
    }
  }
  return fit;
}

}  // namespace

MixedTreeFit fit_mixed_tree(const NodeAssignment& a, std::span<const double> r,
                            std::span<const int> rows, bool force_zero_between) {
  if (a.node.size() != r.size()) {
    throw std::invalid_argument("fit_mixed_tree: assignment and residuals not aligned");
  }
  if (rows.empty()) throw std::invalid_argument("fit_mixed_tree: no estimation rows");

  // sigma^2 floor scaled to the residual variance over the estimation rows
  std::vector<double> sub;
  sub.reserve(rows.size());
  for (int row : rows) sub.push_back(r[static_cast<std::size_t>(row)]);
  const double mean = kernels::sum(sub.data(), sub.size()) / static_cast<double>(sub.size());
  const double var = kernels::sse_about(sub.data(), sub.size(), mean) /
                     static_cast<double>(sub.size());
  const double floor = kFloorScale * var + kFloorAbs;

  CellTable table(a, r, rows);
  std::vector<VarianceComponents> comps(static_cast<std::size_t>(a.k));
  for (int j = 0; j < a.k; ++j) {
    const std::vector<CellStats> cells = table.node_cells(j);
    if (cells.empty()) {
      comps[static_cast<std::size_t>(j)] = {0.0, floor};
      continue;
    }
    comps[static_cast<std::size_t>(j)] = estimate_components(cells, floor);
    if (force_zero_between) comps[static_cast<std::size_t>(j)].between = 0.0;
  }
  return solve_cells(a, table, comps);
}

MixedTreeFit fit_mixed_tree(const NodeAssignment& a, std::span<const double> r) {
  std::vector<int> all(a.node.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return fit_mixed_tree(a, r, all);
}

MixedTreeFit fit_mixed_tree_plugged(const NodeAssignment& a, std::span<const double> r,
                                    std::span<const int> rows,
                                    std::span<const VarianceComponents> comps) {
  if (static_cast<int>(comps.size()) != a.k) {
    throw std::invalid_argument("fit_mixed_tree_plugged: need one component pair per node");
  }
  CellTable table(a, r, rows);
  return solve_cells(a, table, comps);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_henderson(const Eigen::MatrixXd& xt,
                                                            const Eigen::MatrixXd& zt,
                                                            const Eigen::MatrixXd& psi,
                                                            double sigma2,
                                                            const Eigen::VectorXd& r) {
  const Eigen::Index k = xt.cols();
  const Eigen::Index gk = zt.cols();
  if (psi.rows() != psi.cols()) throw std::invalid_argument("solve_henderson: psi must be square");
  const Eigen::Index q = psi.rows();
  if (gk % q != 0) {
    throw std::invalid_argument("solve_henderson: Z columns not a multiple of psi dimension");
  }
  const Eigen::Index g = gk / q;

  Eigen::FullPivLU<Eigen::MatrixXd> psi_lu(psi);
  if (!psi_lu.isInvertible()) {
    throw std::runtime_error("rank error: psi is singular");
  }
  const Eigen::MatrixXd psi_inv = psi_lu.inverse();

  Eigen::MatrixXd lhs(k + gk, k + gk);
  lhs.topLeftCorner(k, k) = xt.transpose() * xt;
  lhs.topRightCorner(k, gk) = xt.transpose() * zt;
  lhs.bottomLeftCorner(gk, k) = zt.transpose() * xt;
  lhs.bottomRightCorner(gk, gk) = zt.transpose() * zt;
  for (Eigen::Index gi = 0; gi < g; ++gi) {
    lhs.block(k + gi * q, k + gi * q, q, q) += sigma2 * psi_inv;
  }

  Eigen::VectorXd rhs(k + gk);
  rhs.head(k) = xt.transpose() * r;
  rhs.tail(gk) = zt.transpose() * r;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  if (!lu.isInvertible()) {
    throw std::runtime_error("rank error: Henderson system is singular");
  }
  const Eigen::VectorXd sol = lu.solve(rhs);
  return {sol.head(k), sol.tail(gk)};
}

}  // namespace metboost
