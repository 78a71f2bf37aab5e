#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metboost/data.hpp"
#include "metboost/rng.hpp"
#include "metboost/tree.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<unsigned> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    path = base / ("metboost_test_" + std::to_string(::getpid()) + "_" +
                   std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The 8-student, 2-school fixture: a depth-2 tree on GPA then HW recovers
// leaf means [2.7, 4.6, 7.2, 9.8] with thresholds 3.2 and 0.8.
inline std::string school_fixture_csv() {
  return "MATH,GPA,HW,SCHOOL\n"
         "2.6,3.0,0.7,s1\n"
         "2.8,3.0,0.7,s1\n"
         "4.5,3.0,0.9,s1\n"
         "4.7,3.0,0.9,s1\n"
         "7.1,3.4,0.7,s2\n"
         "7.3,3.4,0.7,s2\n"
         "9.7,3.4,0.9,s2\n"
         "9.9,3.4,0.9,s2\n";
}

inline metboost::Dataset school_fixture_dataset() {
  TempDir dir;
  const std::string p = dir.file("school.csv");
  write_file(p, school_fixture_csv());
  return metboost::load_csv(p, "MATH", "SCHOOL");
}

// In-memory dataset from continuous columns.
inline metboost::Dataset make_dataset(const std::vector<std::vector<double>>& cols,
                                      const std::vector<double>& y,
                                      const std::vector<int>& groups, int n_groups) {
  metboost::Dataset d;
  d.outcome_name = "y";
  d.id_name = "id";
  d.outcome = y;
  d.group = groups;
  for (int g = 0; g < n_groups; ++g) d.group_labels.push_back("g" + std::to_string(g + 1));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    metboost::DataColumn c;
    c.name = "x" + std::to_string(j + 1);
    c.values = cols[j];
    c.missing.assign(y.size(), 0);
    d.predictors.push_back(std::move(c));
  }
  d.rebuild_group_index();
  return d;
}

// Feature view over a dataset's predictor columns (no group injection).
inline metboost::FeatureMatrix feature_view(const metboost::Dataset& d) {
  metboost::FeatureMatrix X;
  X.n_rows = d.n_rows();
  for (const metboost::DataColumn& col : d.predictors) {
    metboost::FeatureColumn fc;
    fc.name = col.name;
    fc.categorical = col.categorical;
    fc.n_levels = static_cast<int>(col.levels.size());
    fc.values = col.values.data();
    fc.missing = col.missing.data();
    X.cols.push_back(std::move(fc));
  }
  X.compute_any_missing();
  return X;
}

inline std::vector<int> all_rows(std::size_t n) {
  std::vector<int> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<int>(i);
  return rows;
}

// Clustered regression data: y = x1^2/2 + x2 + alpha_g + e.
inline metboost::Dataset clustered_dataset(std::uint64_t seed, int n, int p, int g,
                                           double alpha_sd = 1.0, double noise_sd = 1.0) {
  metboost::Rng rng(metboost::mix_seed(seed, 0xDA7Aull));
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(p));
  for (auto& c : cols) {
    c.resize(static_cast<std::size_t>(n));
    for (double& v : c) v = rng.normal();
  }
  std::vector<double> alpha(static_cast<std::size_t>(g));
  for (double& a : alpha) a = alpha_sd * rng.normal();
  std::vector<int> groups(static_cast<std::size_t>(n));
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    groups[ii] = i % g;
    y[ii] = 0.5 * cols[0][ii] * cols[0][ii] + (p > 1 ? cols[1][ii] : 0.0) +
            alpha[static_cast<std::size_t>(groups[ii])] + noise_sd * rng.normal();
  }
  return make_dataset(cols, y, groups, g);
}

}  // namespace testutil
