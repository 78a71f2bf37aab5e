#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "metboost/mixed_node.hpp"
#include "metboost/node_design.hpp"

using namespace metboost;
using namespace testutil;

namespace {

NodeAssignment random_assignment(Rng& rng, int n, int k, int g) {
  NodeAssignment a;
  a.k = k;
  a.g = g;
  a.node.resize(static_cast<std::size_t>(n));
  a.group.resize(static_cast<std::size_t>(n));
  a.cell_count.assign(static_cast<std::size_t>(k) * g, 0);
  for (int i = 0; i < n; ++i) {
    // first k rows cover every node so none is empty
    const int node = (i < k) ? i : rng.below(k);
    const int grp = rng.below(g);
    a.node[static_cast<std::size_t>(i)] = node;
    a.group[static_cast<std::size_t>(i)] = grp;
    ++a.cell_count[static_cast<std::size_t>(node * g + grp)];
  }
  return a;
}

}  // namespace

TEST_CASE("estimate_components: all variance between groups") {
  const CellStats cells[] = {{0, 2, 1.0, 0.0}, {1, 2, 3.0, 0.0}};
  const VarianceComponents vc = estimate_components(cells, 1e-9);
  CHECK(vc.within == doctest::Approx(1e-9));  // floored
  CHECK(vc.between > 0.0);
  CHECK(vc.between == doctest::Approx(2.0));  // MSB=4, n0=2
}

TEST_CASE("estimate_components: identical cell means clamp between to zero") {
  const CellStats cells[] = {{0, 3, 2.0, 1.0}, {1, 3, 2.0, 1.5}, {2, 2, 2.0, 0.4}};
  const VarianceComponents vc = estimate_components(cells, 1e-12);
  CHECK(vc.between == 0.0);
  CHECK(vc.within > 0.0);
}

TEST_CASE("estimate_components: single group and all-singleton edge cases") {
  {
    const CellStats cells[] = {{0, 5, 1.0, 8.0}};
    const VarianceComponents vc = estimate_components(cells, 1e-12);
    CHECK(vc.between == 0.0);
    CHECK(vc.within == doctest::Approx(2.0));  // SSW/(N-1)
  }
  {
    const CellStats cells[] = {{0, 1, 1.0, 0.0}, {1, 1, 4.0, 0.0}};
    const VarianceComponents vc = estimate_components(cells, 1e-12);
    CHECK(vc.between == 0.0);
    CHECK(vc.within == doctest::Approx(1e-12));
  }
  CHECK_THROWS_AS(estimate_components({}, 1e-12), std::invalid_argument);
}

TEST_CASE("estimate_components: Monte Carlo consistency at the balanced design") {
  // g=20 groups of 10, between = within = 1; mean estimate within +-0.1
  Rng rng(31);
  double sum_between = 0.0;
  const int reps = 500;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<CellStats> cells;
    for (int gi = 0; gi < 20; ++gi) {
      const double alpha = rng.normal();
      double s = 0.0, ss = 0.0;
      for (int i = 0; i < 10; ++i) {
        const double v = alpha + rng.normal();
        s += v;
        ss += v * v;
      }
      const double mean = s / 10.0;
      cells.push_back({gi, 10, mean, ss - 10.0 * mean * mean});
    }
    sum_between += estimate_components(cells, 1e-12).between;
  }
  CHECK(sum_between / reps == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("shrinkage_weight: closed form and limits") {
  CHECK(shrinkage_weight(0.0, 1.0, 10) == 0.0);
  CHECK(shrinkage_weight(1.0, 1.0, 4) == doctest::Approx(0.8));
  CHECK(shrinkage_weight(2.0, 1e-300, 1) == 1.0);
  CHECK(shrinkage_weight(1.0, 1.0, 0) == 0.0);  // no data, full shrinkage
}

TEST_CASE("shrinkage_weight: monotone in n, between, and within") {
  const double sa[] = {0.1, 0.5, 1.0, 2.0, 5.0};
  const double s2[] = {0.1, 0.5, 1.0, 2.0, 5.0};
  const int ns[] = {1, 2, 4, 8, 16, 64};
  for (double a : sa) {
    for (double w : s2) {
      for (std::size_t i = 0; i + 1 < 6; ++i) {
        CHECK(shrinkage_weight(a, w, ns[i]) <= shrinkage_weight(a, w, ns[i + 1]));
      }
    }
  }
  for (double w : s2) {
    for (int n : ns) {
      for (std::size_t i = 0; i + 1 < 5; ++i) {
        CHECK(shrinkage_weight(sa[i], w, n) <= shrinkage_weight(sa[i + 1], w, n));
        CHECK(shrinkage_weight(sa[i], s2[i], n) >= shrinkage_weight(sa[i], s2[i + 1], n));
      }
    }
  }
  for (double a : sa) {
    for (double w : s2) {
      for (int n : ns) {
        const double omega = shrinkage_weight(a, w, n);
        CHECK(omega >= 0.0);
        CHECK(omega <= 1.0);
      }
    }
  }
}

TEST_CASE("fit_mixed_tree: zero between-group variance degenerates to node means") {
  Rng rng(32);
  const NodeAssignment a = random_assignment(rng, 60, 3, 4);
  std::vector<double> r(60);
  for (double& v : r) v = rng.normal();
  const MixedTreeFit fit = fit_mixed_tree(a, r, all_rows(60), /*force_zero_between=*/true);
  for (int j = 0; j < 3; ++j) {
    double s = 0.0;
    int n = 0;
    for (int i = 0; i < 60; ++i) {
      if (a.node[static_cast<std::size_t>(i)] == j) {
        s += r[static_cast<std::size_t>(i)];
        ++n;
      }
    }
    CHECK(fit.beta[static_cast<std::size_t>(j)] == doctest::Approx(s / n).epsilon(1e-12));
  }
  for (double b : fit.b) CHECK(b == 0.0);
}

TEST_CASE("fit_mixed_tree: single group has no random effects") {
  Rng rng(33);
  const NodeAssignment a = random_assignment(rng, 40, 4, 1);
  std::vector<double> r(40);
  for (double& v : r) v = rng.normal();
  const MixedTreeFit fit = fit_mixed_tree(a, r);
  for (double b : fit.b) CHECK(b == 0.0);
  for (const VarianceComponents& c : fit.comps) CHECK(c.between == 0.0);
}

TEST_CASE("fit_mixed_tree: matches the Henderson solve per node") {
  Rng rng(34);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 60;
    const int k = 2 + rng.below(3);
    const int g = 2 + rng.below(4);
    const NodeAssignment a = random_assignment(rng, n, k, g);
    std::vector<double> r(static_cast<std::size_t>(n));
    std::vector<double> alpha(static_cast<std::size_t>(g));
    for (double& v : alpha) v = rng.normal();
    for (int i = 0; i < n; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      r[ii] = alpha[static_cast<std::size_t>(a.group[ii])] + rng.normal();
    }
    const MixedTreeFit fit = fit_mixed_tree(a, r);

    for (int j = 0; j < k; ++j) {
      const VarianceComponents& vc = fit.comps[static_cast<std::size_t>(j)];
      // restrict the dense system to this node's rows
      std::vector<int> rows;
      for (int i = 0; i < n; ++i) {
        if (a.node[static_cast<std::size_t>(i)] == j) rows.push_back(i);
      }
      if (vc.between <= 0.0) {
        for (int gi = 0; gi < g; ++gi) CHECK(fit.cell_b(j, gi) == 0.0);
        continue;
      }
      NodeAssignment sub;
      sub.k = 1;
      sub.g = g;
      sub.cell_count.assign(static_cast<std::size_t>(g), 0);
      Eigen::VectorXd rv(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t x = 0; x < rows.size(); ++x) {
        sub.node.push_back(0);
        sub.group.push_back(a.group[static_cast<std::size_t>(rows[x])]);
        ++sub.cell_count[static_cast<std::size_t>(sub.group.back())];
        rv(static_cast<Eigen::Index>(x)) = r[static_cast<std::size_t>(rows[x])];
      }
      const auto [xt, zt] = materialize(sub);
      Eigen::MatrixXd psi(1, 1);
      psi(0, 0) = vc.between;
      const auto [beta, b] = solve_henderson(xt, zt, psi, vc.within, rv);
      CHECK(std::fabs(beta(0) - fit.beta[static_cast<std::size_t>(j)]) < 1e-8);
      for (int gi = 0; gi < g; ++gi) {
        CHECK(std::fabs(b(gi) - fit.cell_b(j, gi)) < 1e-8);
      }
    }
  }
}

TEST_CASE("fit_mixed_tree: weighted centering and no-overshoot invariants") {
  Rng rng(35);
  const NodeAssignment a = random_assignment(rng, 80, 3, 5);
  std::vector<double> r(80);
  for (double& v : r) v = rng.normal() * 2.0;
  const MixedTreeFit fit = fit_mixed_tree(a, r);

  for (int j = 0; j < a.k; ++j) {
    const VarianceComponents& vc = fit.comps[static_cast<std::size_t>(j)];
    double centering = 0.0;
    for (int gi = 0; gi < a.g; ++gi) {
      const int n = a.count(j, gi);
      if (n == 0) {
        CHECK(fit.cell_b(j, gi) == 0.0);
        continue;
      }
      double s = 0.0;
      for (int i = 0; i < 80; ++i) {
        if (a.node[static_cast<std::size_t>(i)] == j &&
            a.group[static_cast<std::size_t>(i)] == gi) {
          s += r[static_cast<std::size_t>(i)];
        }
      }
      const double cell_mean = s / n;
      const double w = 1.0 / (vc.between + vc.within / n);
      centering += w * (cell_mean - fit.beta[static_cast<std::size_t>(j)]);
      CHECK(std::fabs(fit.cell_b(j, gi)) <=
            std::fabs(cell_mean - fit.beta[static_cast<std::size_t>(j)]) + 1e-15);
    }
    CHECK(std::fabs(centering) < 1e-9);
  }
}

TEST_CASE("solve_henderson: no-penalty limit reproduces cell means") {
  Rng rng(36);
  const NodeAssignment a = random_assignment(rng, 30, 2, 3);
  std::vector<double> r(30);
  for (double& v : r) v = rng.normal();
  const auto [xt, zt] = materialize(a);
  Eigen::VectorXd rv = Eigen::Map<const Eigen::VectorXd>(r.data(), 30);
  const Eigen::MatrixXd psi = 1e9 * Eigen::MatrixXd::Identity(2, 2);
  const auto [beta, b] = solve_henderson(xt, zt, psi, 1.0, rv);
  for (int j = 0; j < a.k; ++j) {
    for (int gi = 0; gi < a.g; ++gi) {
      const int n = a.count(j, gi);
      if (n == 0) continue;
      double s = 0.0;
      for (int i = 0; i < 30; ++i) {
        if (a.node[static_cast<std::size_t>(i)] == j &&
            a.group[static_cast<std::size_t>(i)] == gi) {
          s += r[static_cast<std::size_t>(i)];
        }
      }
      CHECK(beta(j) + b(gi * a.k + j) == doctest::Approx(s / n).epsilon(1e-6));
    }
  }
}

TEST_CASE("solve_henderson: balanced one-node system matches the shrinkage formula") {
  Rng rng(37);
  const int g = 4, per = 6, n = g * per;
  NodeAssignment a;
  a.k = 1;
  a.g = g;
  a.cell_count.assign(static_cast<std::size_t>(g), per);
  std::vector<double> r(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    a.node.push_back(0);
    a.group.push_back(i / per);
    r[static_cast<std::size_t>(i)] = rng.normal();
  }
  const auto [xt, zt] = materialize(a);
  const Eigen::VectorXd rv = Eigen::Map<const Eigen::VectorXd>(r.data(), n);
  const double between = 0.7, within = 1.3;
  Eigen::MatrixXd psi(1, 1);
  psi(0, 0) = between;
  const auto [beta, b] = solve_henderson(xt, zt, psi, within, rv);
  const double omega = shrinkage_weight(between, within, per);
  for (int gi = 0; gi < g; ++gi) {
    double s = 0.0;
    for (int i = gi * per; i < (gi + 1) * per; ++i) s += r[static_cast<std::size_t>(i)];
    const double cell_mean = s / per;
    CHECK(b(gi) == doctest::Approx(omega * (cell_mean - beta(0))).epsilon(1e-10));
  }
}

TEST_CASE("solve_henderson: school-fixture system matches an independent dense route") {
  const Dataset d = school_fixture_dataset();
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(8), TreeParams{2, 2, 0});
  const NodeAssignment a = node_design(t, X, d.group, 2);
  const auto [xt, zt] = materialize(a);
  const Eigen::VectorXd rv = Eigen::Map<const Eigen::VectorXd>(d.outcome.data(), 8);
  const Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(4, 4);
  const auto [beta, b] = solve_henderson(xt, zt, psi, 1.0, rv);

  const Eigen::VectorXd psi_diag = Eigen::VectorXd::Ones(8);
  const auto [beta2, b2] = oracle::ridge_ls(xt, zt, psi_diag, 1.0, rv);
  for (int j = 0; j < 4; ++j) CHECK(beta(j) == doctest::Approx(beta2(j)).epsilon(1e-9));
  for (int j = 0; j < 8; ++j) CHECK(b(j) == doctest::Approx(b2(j)).epsilon(1e-9));
}

TEST_CASE("solve_henderson: singular psi raises a rank error") {
  const Dataset d = school_fixture_dataset();
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(8), TreeParams{1, 2, 0});
  const NodeAssignment a = node_design(t, X, d.group, 2);
  const auto [xt, zt] = materialize(a);
  const Eigen::VectorXd rv = Eigen::Map<const Eigen::VectorXd>(d.outcome.data(), 8);
  CHECK_THROWS_WITH_AS(solve_henderson(xt, zt, Eigen::MatrixXd::Zero(2, 2), 1.0, rv),
                       doctest::Contains("rank error"), std::runtime_error);
}
