#include "metboost/tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metboost/kernels.hpp"

namespace metboost {

void FeatureMatrix::compute_any_missing() {
  any_missing = false;
  for (const FeatureColumn& c : cols) {
    if (c.missing == nullptr) continue;
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (c.missing[i]) {
        any_missing = true;
        return;
      }
    }
  }
}

namespace {

// Relative floor below which a split gain counts as no reduction; keeps
// constant responses from producing zero-gain splits out of rounding noise.
constexpr double kGainEps = 1e-12;

struct Candidate {
  bool found = false;
  double gain = 0.0;
  SplitRule rule;
};

std::int8_t route_row(const TreeNode& nd, const FeatureMatrix& X, std::size_t row) {
  const int pc = nd.split.col;
  if (!X.missing_at(pc, row)) {
    const std::int8_t d = nd.split.route(X.at(pc, row));
    if (d != kDirUnseen) return d;
  }
  for (const Surrogate& s : nd.surrogates) {
    if (X.missing_at(s.rule.col, row)) continue;
    std::int8_t d = s.rule.route(X.at(s.rule.col, row));
    if (d == kDirUnseen) continue;
    if (s.swap) d = static_cast<std::int8_t>(-d);
    return d;
  }
  return nd.default_left ? kDirLeft : kDirRight;
}

struct Builder {
  const FeatureMatrix& X;
  std::span<const double> r;
  const TreeParams& params;
  std::vector<TreeNode> nodes;
  int n_leaves = 0;

  // scratch reused across nodes (never live across a recursive call)
  std::vector<double> vals, resp, lresp, rresp;
  std::vector<int> order;
  std::vector<double> level_sum;
  std::vector<int> level_count, level_order;
  std::vector<std::int8_t> prim_dir;

  Builder(const FeatureMatrix& x, std::span<const double> rr, const TreeParams& p)
      : X(x), r(rr), params(p) {}

  // Two-pass SSE of the rule's partition, gathered in row order. Candidates
  // from different columns that induce the same partition get bit-identical
  // gains here, so cross-column ties resolve to the lowest column index.
  double exact_gain(const std::vector<int>& rows, const SplitRule& rule) {
    resp.clear();
    lresp.clear();
    rresp.clear();
    for (int row : rows) {
      const auto i = static_cast<std::size_t>(row);
      if (X.missing_at(rule.col, i)) continue;
      const double rv = r[i];
      resp.push_back(rv);
      (rule.route(X.at(rule.col, i)) == kDirLeft ? lresp : rresp).push_back(rv);
    }
    if (lresp.empty() || rresp.empty()) return 0.0;  // degenerate midpoint rounding
    auto sse_of = [](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double s = 0.0;
      for (double x : v) s += (x - mean) * (x - mean);
      return s;
    };
    return sse_of(resp) - sse_of(lresp) - sse_of(rresp);
  }

  Candidate best_split(const std::vector<int>& rows) {
    Candidate best;
    const int n_cols = static_cast<int>(X.cols.size());
    for (int c = 0; c < n_cols; ++c) {
      const FeatureColumn& col = X.cols[static_cast<std::size_t>(c)];
      vals.clear();
      resp.clear();
      double s = 0.0, ss = 0.0;
      for (int row : rows) {
        const auto i = static_cast<std::size_t>(row);
        if (X.missing_at(c, i)) continue;
        const double rv = r[i];
        vals.push_back(X.at(c, i));
        resp.push_back(rv);
        s += rv;
        ss += rv * rv;
      }
      const int n_obs = static_cast<int>(vals.size());
      if (n_obs < 2 * params.min_node) continue;
      const double parent = s * s / n_obs;
      const double tau = kGainEps * ss;

      // fast scan for this column's best boundary
      bool col_found = false;
      double col_gain = 0.0;
      SplitRule col_rule;
      col_rule.col = c;

      if (!col.categorical) {
        order.resize(static_cast<std::size_t>(n_obs));
        for (int i = 0; i < n_obs; ++i) order[static_cast<std::size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [this](int a, int b) {
          return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)];
        });
        double sl = 0.0;
        for (int t = 0; t + 1 < n_obs; ++t) {
          sl += resp[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])];
          const double v0 = vals[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])];
          const double v1 = vals[static_cast<std::size_t>(order[static_cast<std::size_t>(t + 1)])];
          if (!(v0 < v1)) continue;
          const int nl = t + 1;
          const int nr = n_obs - nl;
          if (nl < params.min_node) continue;
          if (nr < params.min_node) break;
          const double sr = s - sl;
          const double gain = sl * sl / nl + sr * sr / nr - parent;
          if (gain > tau && gain > col_gain) {
            col_found = true;
            col_gain = gain;
            col_rule.categorical = false;
            col_rule.threshold = (v0 + v1) * 0.5;
          }
        }
      } else {
        const int L = col.n_levels;
        level_sum.assign(static_cast<std::size_t>(L), 0.0);
        level_count.assign(static_cast<std::size_t>(L), 0);
        for (int i = 0; i < n_obs; ++i) {
          const int code = static_cast<int>(vals[static_cast<std::size_t>(i)]);
          level_sum[static_cast<std::size_t>(code)] += resp[static_cast<std::size_t>(i)];
          level_count[static_cast<std::size_t>(code)] += 1;
        }
        level_order.clear();
        for (int l = 0; l < L; ++l) {
          if (level_count[static_cast<std::size_t>(l)] > 0) level_order.push_back(l);
        }
        if (level_order.size() < 2) continue;
        // Classic CART reduction: order levels by mean response, scan as ordinal.
        std::sort(level_order.begin(), level_order.end(), [this](int a, int b) {
          const double ma = level_sum[static_cast<std::size_t>(a)] /
                            level_count[static_cast<std::size_t>(a)];
          const double mb = level_sum[static_cast<std::size_t>(b)] /
                            level_count[static_cast<std::size_t>(b)];
          if (ma != mb) return ma < mb;
          return a < b;
        });
        double sl = 0.0;
        int nl = 0;
        for (std::size_t t = 0; t + 1 < level_order.size(); ++t) {
          const int lev = level_order[t];
          sl += level_sum[static_cast<std::size_t>(lev)];
          nl += level_count[static_cast<std::size_t>(lev)];
          const int nr = n_obs - nl;
          if (nl < params.min_node) continue;
          if (nr < params.min_node) break;
          const double sr = s - sl;
          const double gain = sl * sl / nl + sr * sr / nr - parent;
          if (gain > tau && gain > col_gain) {
            col_found = true;
            col_gain = gain;
            col_rule.categorical = true;
            col_rule.level_dir.assign(static_cast<std::size_t>(L), kDirUnseen);
            for (std::size_t u = 0; u < level_order.size(); ++u) {
              col_rule.level_dir[static_cast<std::size_t>(level_order[u])] =
                  (u <= t) ? kDirLeft : kDirRight;
            }
          }
        }
      }

      if (!col_found) continue;
      const double gain = exact_gain(rows, col_rule);
      if (gain > tau && gain > best.gain) {
        best.found = true;
        best.gain = gain;
        best.rule = std::move(col_rule);
      }
    }
    return best;
  }

  // Surrogate rules ranked by agreement with the primary routing, measured on
  // rows where both predictors are observed; kept only if they beat routing
  // everything to the majority side.
  void attach_surrogates(TreeNode& nd, const std::vector<int>& rows) {
    prim_dir.assign(rows.size(), 0);
    int nL = 0, nR = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = static_cast<std::size_t>(rows[i]);
      if (X.missing_at(nd.split.col, row)) continue;
      const std::int8_t d = nd.split.route(X.at(nd.split.col, row));
      prim_dir[i] = d;
      if (d == kDirLeft) ++nL;
      else if (d == kDirRight) ++nR;
    }
    nd.default_left = nL >= nR;
    if (params.max_surrogates <= 0 || !X.any_missing) return;

    std::vector<Surrogate> candidates;
    const int n_cols = static_cast<int>(X.cols.size());
    for (int c = 0; c < n_cols; ++c) {
      if (c == nd.split.col) continue;
      const FeatureColumn& col = X.cols[static_cast<std::size_t>(c)];
      vals.clear();
      std::vector<std::int8_t> pd;
      int cl = 0, cr = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (prim_dir[i] == 0) continue;
        const auto row = static_cast<std::size_t>(rows[i]);
        if (X.missing_at(c, row)) continue;
        vals.push_back(X.at(c, row));
        pd.push_back(prim_dir[i]);
        if (prim_dir[i] == kDirLeft) ++cl;
        else ++cr;
      }
      const int m = static_cast<int>(vals.size());
      if (m < 2) continue;
      const int maj = std::max(cl, cr);

      Surrogate cand;
      cand.rule.col = c;
      int best_agree = -1;

      if (!col.categorical) {
        order.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [this](int a, int b) {
          return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)];
        });
        int cnt_left = 0;  // primary-left rows in the prefix
        for (int t = 0; t + 1 < m; ++t) {
          const int oi = order[static_cast<std::size_t>(t)];
          if (pd[static_cast<std::size_t>(oi)] == kDirLeft) ++cnt_left;
          const double v0 = vals[static_cast<std::size_t>(oi)];
          const double v1 = vals[static_cast<std::size_t>(order[static_cast<std::size_t>(t + 1)])];
          if (!(v0 < v1)) continue;
          const int prefix = t + 1;
          const int agree_same = cnt_left + (cr - (prefix - cnt_left));
          const int agree_swap = (prefix - cnt_left) + (cl - cnt_left);
          if (agree_same > best_agree) {
            best_agree = agree_same;
            cand.rule.categorical = false;
            cand.rule.threshold = (v0 + v1) * 0.5;
            cand.swap = false;
          }
          if (agree_swap > best_agree) {
            best_agree = agree_swap;
            cand.rule.categorical = false;
            cand.rule.threshold = (v0 + v1) * 0.5;
            cand.swap = true;
          }
        }
      } else {
        const int L = col.n_levels;
        std::vector<int> lcount(static_cast<std::size_t>(L), 0);
        std::vector<int> rcount(static_cast<std::size_t>(L), 0);
        for (int i = 0; i < m; ++i) {
          const int code = static_cast<int>(vals[static_cast<std::size_t>(i)]);
          if (pd[static_cast<std::size_t>(i)] == kDirLeft) ++lcount[static_cast<std::size_t>(code)];
          else ++rcount[static_cast<std::size_t>(code)];
        }
        cand.rule.categorical = true;
        cand.rule.level_dir.assign(static_cast<std::size_t>(L), kDirUnseen);
        int agree = 0;
        for (int l = 0; l < L; ++l) {
          const int lc = lcount[static_cast<std::size_t>(l)];
          const int rc = rcount[static_cast<std::size_t>(l)];
          if (lc + rc == 0) continue;
          cand.rule.level_dir[static_cast<std::size_t>(l)] = (lc >= rc) ? kDirLeft : kDirRight;
          agree += std::max(lc, rc);
        }
        cand.swap = false;
        best_agree = agree;
      }

      if (best_agree > maj) {
        cand.agreement = static_cast<double>(best_agree) / static_cast<double>(m);
        candidates.push_back(std::move(cand));
      }
    }

    std::sort(candidates.begin(), candidates.end(), [](const Surrogate& a, const Surrogate& b) {
      if (a.agreement != b.agreement) return a.agreement > b.agreement;
      return a.rule.col < b.rule.col;
    });
    if (static_cast<int>(candidates.size()) > params.max_surrogates) {
      candidates.resize(static_cast<std::size_t>(params.max_surrogates));
    }
    nd.surrogates = std::move(candidates);
  }

  int build(std::vector<int>& rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();

    resp.clear();
    for (int row : rows) resp.push_back(r[static_cast<std::size_t>(row)]);
    const double total = kernels::sum(resp.data(), resp.size());
    nodes[static_cast<std::size_t>(id)].count = static_cast<int>(rows.size());
    nodes[static_cast<std::size_t>(id)].value = total / static_cast<double>(rows.size());

    if (depth < params.depth && static_cast<int>(rows.size()) >= 2 * params.min_node) {
      const Candidate cand = best_split(rows);
      if (cand.found) {
        nodes[static_cast<std::size_t>(id)].split = cand.rule;
        nodes[static_cast<std::size_t>(id)].sse_reduction = cand.gain;
        attach_surrogates(nodes[static_cast<std::size_t>(id)], rows);

        std::vector<int> lrows, rrows;
        lrows.reserve(rows.size());
        rrows.reserve(rows.size());
        for (int row : rows) {
          const std::int8_t d =
              route_row(nodes[static_cast<std::size_t>(id)], X, static_cast<std::size_t>(row));
          (d == kDirLeft ? lrows : rrows).push_back(row);
        }
        if (!lrows.empty() && !rrows.empty()) {
          const int l = build(lrows, depth + 1);
          const int rr_id = build(rrows, depth + 1);
          nodes[static_cast<std::size_t>(id)].left = l;
          nodes[static_cast<std::size_t>(id)].right = rr_id;
          return id;
        }
        // all rows routed one way (possible only through missing-value routing)
        nodes[static_cast<std::size_t>(id)].split = SplitRule{};
        nodes[static_cast<std::size_t>(id)].surrogates.clear();
        nodes[static_cast<std::size_t>(id)].sse_reduction = 0.0;
      }
    }
    nodes[static_cast<std::size_t>(id)].leaf_index = n_leaves++;
    return id;
  }
};

}  // namespace

Tree fit_tree(const FeatureMatrix& X, std::span<const double> response,
              std::span<const int> rows, const TreeParams& params) {
  if (rows.empty()) throw std::invalid_argument("fit_tree: no rows");
  if (params.depth < 1 || params.min_node < 1 || params.max_surrogates < 0) {
    throw std::invalid_argument("parameter error: invalid tree params");
  }
  for (int row : rows) {
    if (!std::isfinite(response[static_cast<std::size_t>(row)])) {
      throw std::invalid_argument("fit_tree: non-finite response at row " + std::to_string(row));
    }
  }
  Builder b(X, response, params);
  std::vector<int> all(rows.begin(), rows.end());
  b.build(all, 0);
  Tree t;
  t.nodes = std::move(b.nodes);
  t.n_leaves = b.n_leaves;
  return t;
}

int Tree::assign_node(const FeatureMatrix& X, std::size_t row) const {
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
    id = (route_row(nd, X, row) == kDirLeft) ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(id)].leaf_index;
}

double Tree::predict_row(const FeatureMatrix& X, std::size_t row) const {
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
    id = (route_row(nd, X, row) == kDirLeft) ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(id)].value;
}

void Tree::accumulate_sse_reduction(std::span<double> out) const {
  for (const TreeNode& nd : nodes) {
    if (!nd.is_leaf()) out[static_cast<std::size_t>(nd.split.col)] += nd.sse_reduction;
  }
}

std::vector<double> predict_tree(const Tree& t, const FeatureMatrix& X) {
  std::vector<double> out(X.n_rows);
  for (std::size_t i = 0; i < X.n_rows; ++i) out[i] = t.predict_row(X, i);
  return out;
}

}  // namespace metboost
