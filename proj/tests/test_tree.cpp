#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "metboost/tree.hpp"

using namespace metboost;
using namespace testutil;

namespace {

int count_splits(const Tree& t) {
  int n = 0;
  for (const TreeNode& nd : t.nodes) n += !nd.is_leaf();
  return n;
}

}  // namespace

TEST_CASE("fit_tree: perfectly separable binary predictor at depth 1") {
  std::vector<std::vector<double>> cols{{0, 0, 0, 0, 1, 1, 1, 1}};
  std::vector<double> y{1, 1, 1, 1, 5, 5, 5, 5};
  const Dataset d = make_dataset(cols, y, std::vector<int>(8, 0), 1);
  const FeatureMatrix X = feature_view(d);
  TreeParams params{1, 1, 0};
  const Tree t = fit_tree(X, d.outcome, all_rows(8), params);

  REQUIRE(t.n_leaves == 2);
  const TreeNode& root = t.nodes[0];
  REQUIRE_FALSE(root.is_leaf());
  CHECK(root.split.col == 0);
  CHECK(root.split.threshold == doctest::Approx(0.5));
  CHECK(t.nodes[static_cast<std::size_t>(root.left)].value == doctest::Approx(1.0));
  CHECK(t.nodes[static_cast<std::size_t>(root.right)].value == doctest::Approx(5.0));
  // full between-class SSE: parent SSE is 4*(2)^2*2 = 32, children 0
  CHECK(root.sse_reduction == doctest::Approx(32.0));
}

TEST_CASE("fit_tree: constant response fits a single node") {
  std::vector<std::vector<double>> cols{{1, 2, 3, 4, 5, 6}};
  std::vector<double> y(6, 0.1);  // not exactly representable; gain floor must hold
  const Dataset d = make_dataset(cols, y, std::vector<int>(6, 0), 1);
  const Tree t = fit_tree(feature_view(d), d.outcome, all_rows(6), TreeParams{3, 1, 0});
  CHECK(t.n_leaves == 1);
  CHECK(t.nodes[0].value == doctest::Approx(0.1));
}

TEST_CASE("fit_tree: matches exhaustive enumeration oracle") {
  Rng rng(11);
  for (int inst = 0; inst < 25; ++inst) {
    const int n = 8 + rng.below(23);
    const int p = 1 + rng.below(3);
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(p));
    for (auto& c : cols) {
      c.resize(static_cast<std::size_t>(n));
      for (double& v : c) v = rng.normal();
    }
    std::vector<double> y(static_cast<std::size_t>(n));
    for (double& v : y) v = rng.normal();
    const Dataset d = make_dataset(cols, y, std::vector<int>(static_cast<std::size_t>(n), 0), 1);
    const FeatureMatrix X = feature_view(d);

    TreeParams params{1 + rng.below(2), 1 + rng.below(3), 0};
    const Tree t = fit_tree(X, d.outcome, all_rows(static_cast<std::size_t>(n)), params);
    const auto o = oracle::oracle_fit(X, d.outcome, all_rows(static_cast<std::size_t>(n)), 0,
                                      params);
    std::string why;
    const bool ok = oracle::trees_match(t, 0, *o, 1e-10, &why);
    CHECK_MESSAGE(ok, "instance ", inst, ": ", why);
  }
}

TEST_CASE("fit_tree: split structure invariant to response translation") {
  Rng rng(12);
  const int n = 40;
  std::vector<std::vector<double>> cols(2);
  for (auto& c : cols) {
    c.resize(n);
    for (double& v : c) v = rng.normal();
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = cols[0][i] + 0.3 * rng.normal();
  const Dataset d1 = make_dataset(cols, y, std::vector<int>(n, 0), 1);
  std::vector<double> y2 = y;
  for (double& v : y2) v += 17.5;
  const Dataset d2 = make_dataset(cols, y2, std::vector<int>(n, 0), 1);

  const TreeParams params{2, 4, 0};
  const Tree t1 = fit_tree(feature_view(d1), d1.outcome, all_rows(n), params);
  const Tree t2 = fit_tree(feature_view(d2), d2.outcome, all_rows(n), params);
  REQUIRE(t1.nodes.size() == t2.nodes.size());
  for (std::size_t i = 0; i < t1.nodes.size(); ++i) {
    CHECK(t1.nodes[i].is_leaf() == t2.nodes[i].is_leaf());
    if (!t1.nodes[i].is_leaf()) {
      CHECK(t1.nodes[i].split.col == t2.nodes[i].split.col);
      CHECK(t1.nodes[i].split.threshold == t2.nodes[i].split.threshold);
    } else {
      CHECK(t1.nodes[i].value + 17.5 == doctest::Approx(t2.nodes[i].value).epsilon(1e-12));
    }
  }
}

TEST_CASE("fit_tree: depth 1 fits exactly one split") {
  const Dataset d = clustered_dataset(13, 60, 3, 1);
  const Tree t = fit_tree(feature_view(d), d.outcome, all_rows(60), TreeParams{1, 5, 0});
  CHECK(count_splits(t) == 1);
  CHECK(t.n_leaves == 2);
}

TEST_CASE("fit_tree: error paths") {
  const Dataset d = clustered_dataset(14, 10, 1, 1);
  CHECK_THROWS_AS(fit_tree(feature_view(d), d.outcome, {}, TreeParams{}),
                  std::invalid_argument);
  std::vector<double> bad = d.outcome;
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_tree(feature_view(d), bad, all_rows(10), TreeParams{2, 1, 0}),
                  std::invalid_argument);
}

TEST_CASE("assign_node: observed rows follow primary rules") {
  const Dataset d = school_fixture_dataset();
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(8), TreeParams{2, 2, 5});
  REQUIRE(t.n_leaves == 4);
  const int expected[8] = {0, 0, 1, 1, 2, 2, 3, 3};
  for (std::size_t i = 0; i < 8; ++i) CHECK(t.assign_node(X, i) == expected[i]);
}

TEST_CASE("assign_node: duplicate predictor becomes a perfect surrogate") {
  // x2 duplicates x1; mask x1 at predict time and routing must not change
  Rng rng(15);
  const int n = 80;
  std::vector<std::vector<double>> cols(3);
  for (auto& c : cols) c.resize(n);
  for (int i = 0; i < n; ++i) {
    cols[0][static_cast<std::size_t>(i)] = rng.normal();
    cols[1][static_cast<std::size_t>(i)] = cols[0][static_cast<std::size_t>(i)];
    cols[2][static_cast<std::size_t>(i)] = rng.normal();
  }
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] =
        (cols[0][static_cast<std::size_t>(i)] > 0 ? 2.0 : -2.0) + 0.1 * rng.normal();
  }
  Dataset d = make_dataset(cols, y, std::vector<int>(n, 0), 1);
  d.predictors[2].missing[5] = 1;  // some missingness so surrogates are searched

  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(n), TreeParams{1, 5, 5});
  REQUIRE_FALSE(t.nodes[0].is_leaf());
  REQUIRE(t.nodes[0].split.col == 0);
  REQUIRE_FALSE(t.nodes[0].surrogates.empty());
  CHECK(t.nodes[0].surrogates[0].rule.col == 1);
  CHECK(t.nodes[0].surrogates[0].agreement == doctest::Approx(1.0));

  // same data with x1 masked everywhere
  Dataset masked = d;
  std::fill(masked.predictors[0].missing.begin(), masked.predictors[0].missing.end(), 1);
  const FeatureMatrix Xm = feature_view(masked);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    CHECK(t.assign_node(Xm, i) == t.assign_node(X, i));
  }
}

TEST_CASE("assign_node: all predictors missing falls back to default directions") {
  const Dataset d = school_fixture_dataset();
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(8), TreeParams{2, 2, 5});

  Dataset blank = d;
  for (auto& col : blank.predictors) std::fill(col.missing.begin(), col.missing.end(), 1);
  const FeatureMatrix Xb = feature_view(blank);
  const int node = t.assign_node(Xb, 0);
  CHECK(node >= 0);
  CHECK(node < t.n_leaves);
  for (std::size_t i = 1; i < 8; ++i) CHECK(t.assign_node(Xb, i) == node);  // total + constant
}

TEST_CASE("predict_tree: school-fixture region means") {
  const Dataset d = school_fixture_dataset();
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(8), TreeParams{2, 2, 0});
  // student with GPA < 3.2 and HW < 80%
  CHECK(t.predict_row(X, 0) == doctest::Approx(2.7));
  const std::vector<double> yhat = predict_tree(t, X);
  const double expected[8] = {2.7, 2.7, 4.6, 4.6, 7.2, 7.2, 9.8, 9.8};
  for (std::size_t i = 0; i < 8; ++i) CHECK(yhat[i] == doctest::Approx(expected[i]));
}

TEST_CASE("predict_tree: single-node tree is constant") {
  std::vector<std::vector<double>> cols{{1, 2, 3}};
  std::vector<double> y{4, 4, 4};
  const Dataset d = make_dataset(cols, y, std::vector<int>(3, 0), 1);
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(3), TreeParams{2, 1, 0});
  for (double v : predict_tree(t, X)) CHECK(v == doctest::Approx(4.0));
}

TEST_CASE("fit_tree: training predictions equal node means; gains positive") {
  const Dataset d = clustered_dataset(16, 70, 2, 1);
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(70), TreeParams{3, 5, 0});
  // per-leaf mean of training rows equals the stored leaf value
  std::vector<double> sum(static_cast<std::size_t>(t.n_leaves), 0.0);
  std::vector<int> cnt(static_cast<std::size_t>(t.n_leaves), 0);
  for (std::size_t i = 0; i < 70; ++i) {
    const int leaf = t.assign_node(X, i);
    sum[static_cast<std::size_t>(leaf)] += d.outcome[i];
    ++cnt[static_cast<std::size_t>(leaf)];
  }
  for (const TreeNode& nd : t.nodes) {
    if (nd.is_leaf()) {
      CHECK(nd.count == cnt[static_cast<std::size_t>(nd.leaf_index)]);
      CHECK(nd.value ==
            doctest::Approx(sum[static_cast<std::size_t>(nd.leaf_index)] / nd.count)
                .epsilon(1e-12));
      CHECK(nd.count >= 5);
    } else {
      CHECK(nd.sse_reduction > 0.0);
    }
  }
}

TEST_CASE("surrogates: stored agreement beats the majority baseline") {
  Rng rng(17);
  const int n = 120;
  std::vector<std::vector<double>> cols(4);
  for (auto& c : cols) {
    c.resize(n);
    for (double& v : c) v = rng.normal();
  }
  // correlate x2 with x1 so a real surrogate exists
  for (int i = 0; i < n; ++i) {
    cols[1][static_cast<std::size_t>(i)] =
        0.9 * cols[0][static_cast<std::size_t>(i)] + 0.3 * rng.normal();
  }
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = cols[0][static_cast<std::size_t>(i)] + 0.2 * rng.normal();
  }
  Dataset d = make_dataset(cols, y, std::vector<int>(n, 0), 1);
  for (int i = 0; i < n; i += 7) d.predictors[3].missing[static_cast<std::size_t>(i)] = 1;

  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(n), TreeParams{1, 10, 5});
  const TreeNode& root = t.nodes[0];
  REQUIRE_FALSE(root.is_leaf());
  REQUIRE_FALSE(root.surrogates.empty());

  for (const Surrogate& s : root.surrogates) {
    // recompute agreement and the majority baseline on the comparable rows
    int agree = 0, nl = 0, nr = 0, m = 0;
    for (int i = 0; i < n; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      if (X.missing_at(root.split.col, ii) || X.missing_at(s.rule.col, ii)) continue;
      const std::int8_t pd = root.split.route(X.at(root.split.col, ii));
      std::int8_t sd = s.rule.route(X.at(s.rule.col, ii));
      if (sd == kDirUnseen) continue;
      if (s.swap) sd = static_cast<std::int8_t>(-sd);
      ++m;
      (pd == kDirLeft ? nl : nr)++;
      agree += (sd == pd);
    }
    REQUIRE(m > 0);
    CHECK(agree > std::max(nl, nr));  // strictly better than blind majority
    CHECK(s.agreement == doctest::Approx(static_cast<double>(agree) / m));
  }
}

TEST_CASE("fit_tree: categorical split orders levels by mean response") {
  TempDir dir;
  std::string csv = "y,grade,id\n";
  // level means: C=1, A=5, B=9 -> ordinal order C,A,B
  for (int i = 0; i < 6; ++i) csv += std::to_string(1.0 + 0.01 * i) + ",C,g\n";
  for (int i = 0; i < 6; ++i) csv += std::to_string(5.0 + 0.01 * i) + ",A,g\n";
  for (int i = 0; i < 6; ++i) csv += std::to_string(9.0 + 0.01 * i) + ",B,g\n";
  write_file(dir.file("t.csv"), csv);
  const Dataset d = load_csv(dir.file("t.csv"), "y", "id");
  const FeatureMatrix X = feature_view(d);
  const Tree t = fit_tree(X, d.outcome, all_rows(18), TreeParams{1, 6, 0});
  REQUIRE_FALSE(t.nodes[0].is_leaf());
  REQUIRE(t.nodes[0].split.categorical);
  // best boundary separates {C, A} from {B} or {C} from {A, B}; with these
  // means the larger gain is {C} vs {A,B}? check routing consistency instead:
  const std::int8_t dir_c = t.nodes[0].split.route(d.predictors[0].values[0]);
  const std::int8_t dir_a = t.nodes[0].split.route(d.predictors[0].values[6]);
  const std::int8_t dir_b = t.nodes[0].split.route(d.predictors[0].values[12]);
  CHECK(dir_c == kDirLeft);            // lowest mean goes left
  CHECK(dir_b == kDirRight);           // highest mean goes right
  CHECK((dir_a == kDirLeft || dir_a == kDirRight));
  const double lv = t.nodes[static_cast<std::size_t>(t.nodes[0].left)].value;
  const double rv = t.nodes[static_cast<std::size_t>(t.nodes[0].right)].value;
  CHECK(lv < rv);
}
