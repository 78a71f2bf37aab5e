#include "metboost/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "metboost/csv.hpp"

namespace metboost {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool parse_number(const std::string& s, double* out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + s.size()) return false;
  *out = v;
  return true;
}

}  // namespace

void Dataset::rebuild_group_index() {
  rows_by_group.assign(group_labels.size(), {});
  for (std::size_t i = 0; i < group.size(); ++i) {
    rows_by_group[static_cast<std::size_t>(group[i])].push_back(static_cast<int>(i));
  }
}

void Dataset::validate() const {
  const std::size_t n = n_rows();
  if (n == 0) throw std::runtime_error("empty-input error: dataset has no rows");
  if (group.size() != n) throw std::runtime_error("data error: group column length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(outcome[i])) {
      throw std::runtime_error("data error: row " + std::to_string(i + 1) +
                               ": outcome is missing or not finite");
    }
    if (group[i] < 0 || group[i] >= n_groups()) {
      throw std::runtime_error("data error: row " + std::to_string(i + 1) +
                               ": group index out of range");
    }
  }
  for (std::size_t c = 0; c < predictors.size(); ++c) {
    if (predictors[c].values.size() != n || predictors[c].missing.size() != n) {
      throw std::runtime_error("data error: predictor column " + predictors[c].name +
                               " length mismatch");
    }
    for (std::size_t c2 = c + 1; c2 < predictors.size(); ++c2) {
      if (predictors[c].name == predictors[c2].name) {
        throw std::runtime_error("schema error: duplicate predictor column " +
                                 predictors[c].name);
      }
    }
  }
}

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset out;
  out.outcome_name = outcome_name;
  out.id_name = id_name;
  out.group_labels = group_labels;
  out.outcome.reserve(rows.size());
  out.group.reserve(rows.size());
  for (int r : rows) {
    out.outcome.push_back(outcome[static_cast<std::size_t>(r)]);
    out.group.push_back(group[static_cast<std::size_t>(r)]);
  }
  out.predictors.reserve(predictors.size());
  for (const DataColumn& col : predictors) {
    DataColumn c;
    c.name = col.name;
    c.categorical = col.categorical;
    c.levels = col.levels;
    c.values.reserve(rows.size());
    c.missing.reserve(rows.size());
    for (int r : rows) {
      c.values.push_back(col.values[static_cast<std::size_t>(r)]);
      c.missing.push_back(col.missing[static_cast<std::size_t>(r)]);
    }
    out.predictors.push_back(std::move(c));
  }
  out.rebuild_group_index();
  return out;
}

Dataset load_csv(const std::string& path, const std::string& outcome, const std::string& id,
                 const std::string& na_token) {
  const CsvTable t = read_csv(path);

  const int y_col = t.column(outcome);
  if (y_col < 0) throw std::runtime_error("schema error: outcome column '" + outcome +
                                          "' not found in " + path);
  const int id_col = t.column(id);
  if (id_col < 0) throw std::runtime_error("schema error: id column '" + id +
                                           "' not found in " + path);
  if (t.rows.empty()) throw std::runtime_error("empty-input error: " + path + " has no data rows");

  const std::size_t n = t.rows.size();
  Dataset d;
  d.outcome_name = outcome;
  d.id_name = id;

  d.outcome.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& cell = t.rows[i][static_cast<std::size_t>(y_col)];
    double v;
    if (cell.empty() || cell == na_token || !parse_number(cell, &v) || !std::isfinite(v)) {
      throw std::runtime_error("data error: row " + std::to_string(i + 1) +
                               ": outcome cell '" + cell + "' is missing or not numeric");
    }
    d.outcome[i] = v;
  }

  d.group.resize(n);
  std::unordered_map<std::string, int> group_code;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& label = t.rows[i][static_cast<std::size_t>(id_col)];
    auto it = group_code.find(label);
    if (it == group_code.end()) {
      it = group_code.emplace(label, static_cast<int>(d.group_labels.size())).first;
      d.group_labels.push_back(label);
    }
    d.group[i] = it->second;
  }

  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (static_cast<int>(c) == y_col || static_cast<int>(c) == id_col) continue;
    DataColumn col;
    col.name = t.header[c];
    col.values.resize(n, kNaN);
    col.missing.assign(n, 0);

    // Continuous unless some observed cell fails to parse as a number.
    bool numeric = true;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& cell = t.rows[i][c];
      if (cell.empty() || cell == na_token) {
        col.missing[i] = 1;
        continue;
      }
      double v;
      if (!parse_number(cell, &v)) {
        numeric = false;
        break;
      }
      col.values[i] = v;
    }
    if (!numeric) {
      col.categorical = true;
      std::fill(col.values.begin(), col.values.end(), kNaN);
      std::unordered_map<std::string, int> codes;
      for (std::size_t i = 0; i < n; ++i) {
        const std::string& cell = t.rows[i][c];
        if (cell.empty() || cell == na_token) {
          col.missing[i] = 1;
          continue;
        }
        col.missing[i] = 0;
        auto it = codes.find(cell);
        if (it == codes.end()) {
          it = codes.emplace(cell, static_cast<int>(col.levels.size())).first;
          col.levels.push_back(cell);
        }
        col.values[i] = static_cast<double>(it->second);
      }
    }
    d.predictors.push_back(std::move(col));
  }

  d.rebuild_group_index();
  d.validate();
  return d;
}

void write_dataset_csv(const Dataset& d, const std::string& path, const std::string& na_token) {
  CsvTable t;
  t.header.push_back(d.outcome_name);
  for (const auto& col : d.predictors) t.header.push_back(col.name);
  t.header.push_back(d.id_name);

  const std::size_t n = d.n_rows();
  t.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> row;
    row.reserve(t.header.size());
    row.push_back(format_double(d.outcome[i]));
    for (const auto& col : d.predictors) {
      if (col.missing[i]) {
        row.push_back(na_token);
      } else if (col.categorical) {
        row.push_back(col.levels[static_cast<std::size_t>(col.values[i])]);
      } else {
        row.push_back(format_double(col.values[i]));
      }
    }
    row.push_back(d.group_labels[static_cast<std::size_t>(d.group[i])]);
    t.rows.push_back(std::move(row));
  }
  write_csv(t, path);
}

FoldAssignment make_folds(const Dataset& d, int folds, std::uint64_t seed) {
  const int n = static_cast<int>(d.n_rows());
  if (folds < 2 || folds > n) {
    throw std::invalid_argument("parameter error: folds must be in [2, N], got " +
                                std::to_string(folds));
  }
  FoldAssignment fa;
  fa.folds = folds;
  fa.seed = seed;
  fa.fold.assign(static_cast<std::size_t>(n), -1);

  // Round-robin continues across groups so fold sizes stay balanced overall.
  int counter = 0;
  for (std::size_t gi = 0; gi < d.rows_by_group.size(); ++gi) {
    std::vector<int> rows = d.rows_by_group[gi];
    Rng rng(mix_seed(seed, 0xF01Dull, gi));
    rng.shuffle(rows);
    for (int r : rows) {
      fa.fold[static_cast<std::size_t>(r)] = counter % folds;
      ++counter;
    }
  }
  return fa;
}

std::vector<int> subsample(const Dataset& d, double fraction, Rng& rng) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw std::invalid_argument("parameter error: subsample fraction must be in (0, 1]");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(fraction * static_cast<double>(d.n_rows())) + 8);
  for (const std::vector<int>& rows : d.rows_by_group) {
    const int ni = static_cast<int>(rows.size());
    if (ni == 0) continue;
    int take = (fraction >= 1.0)
                   ? ni
                   : std::max(1, static_cast<int>(std::lround(fraction * ni)));
    take = std::min(take, ni);
    if (take == ni) {
      out.insert(out.end(), rows.begin(), rows.end());
      continue;
    }
    std::vector<int> pool = rows;
    for (int j = 0; j < take; ++j) {
      const int pick = j + rng.below(ni - j);
      std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick)]);
      out.push_back(pool[static_cast<std::size_t>(j)]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace metboost
