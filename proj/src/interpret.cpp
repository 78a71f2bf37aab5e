#include "metboost/interpret.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "metboost/csv.hpp"
#include "metboost/kernels.hpp"

namespace metboost {

InfluenceReport relative_influence(const BoostModel& m, bool exclude_group) {
  InfluenceReport rep;
  std::vector<double> total(m.predictors.size(), 0.0);
  for (const Stage& st : m.stages) {
    for (std::size_t c = 0; c < total.size(); ++c) total[c] += st.sse_reduction[c];
  }
  if (exclude_group && m.group_col >= 0) {
    total[static_cast<std::size_t>(m.group_col)] = 0.0;
    rep.group_excluded = true;
  }
  const double grand = kernels::sum(total.data(), total.size());
  rep.entries.resize(total.size());
  for (std::size_t c = 0; c < total.size(); ++c) {
    rep.entries[c].predictor = m.predictors[c].name;
    rep.entries[c].score = grand > 0.0 ? 100.0 * total[c] / grand : 0.0;
  }
  return rep;
}

std::vector<MarginRow> marginal_effects(const BoostModel& m, const Dataset& d,
                                        const std::string& predictor,
                                        const std::vector<std::string>& groups) {
  const DataColumn* col = nullptr;
  for (const DataColumn& c : d.predictors) {
    if (c.name == predictor) {
      col = &c;
      break;
    }
  }
  if (col == nullptr) {
    throw std::invalid_argument("parameter error: unknown predictor '" + predictor + "'");
  }
  if (col->categorical) {
    throw std::invalid_argument("parameter error: marginal effects need a continuous predictor");
  }

  std::vector<std::uint8_t> keep_group(d.group_labels.size(), groups.empty() ? 1 : 0);
  for (const std::string& g : groups) {
    const auto it = std::find(d.group_labels.begin(), d.group_labels.end(), g);
    if (it == d.group_labels.end()) {
      throw std::invalid_argument("parameter error: unknown group '" + g + "'");
    }
    keep_group[static_cast<std::size_t>(it - d.group_labels.begin())] = 1;
  }

  const PredictionFrame frame = build_frame(m, d);
  const std::vector<double> yhat = predict(m, frame);

  std::vector<MarginRow> rows;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    if (!keep_group[static_cast<std::size_t>(d.group[i])]) continue;
    if (col->missing[i]) continue;
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (d.group[a] != d.group[b]) return d.group[a] < d.group[b];
    return col->values[a] < col->values[b];
  });
  rows.reserve(order.size());
  for (std::size_t i : order) {
    rows.push_back({d.group_labels[static_cast<std::size_t>(d.group[i])], col->values[i], yhat[i]});
  }
  return rows;
}

double variance_decomposition(const BoostModel& m, const Dataset& d) {
  if (m.mode != Mode::metboost) {
    throw std::invalid_argument("unsupported-mode error: variance decomposition needs a "
                                "metboost model");
  }
  const PredictionFrame frame = build_frame(m, d);
  std::vector<double> fixed, random;
  predict_parts(m, frame, &fixed, &random);

  const std::size_t n = frame.n_rows();
  std::vector<double> total(n);
  for (std::size_t i = 0; i < n; ++i) total[i] = m.init + fixed[i] + random[i];

  const double mr = kernels::sum(random.data(), n) / static_cast<double>(n);
  const double mt = kernels::sum(total.data(), n) / static_cast<double>(n);
  const double vr = kernels::sse_about(random.data(), n, mr);
  const double vt = kernels::sse_about(total.data(), n, mt);
  if (vt <= 0.0) return 0.0;
  return vr / vt;
}

void write_influence_csv(const InfluenceReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io error: cannot write " + path);
  out << "predictor,score\n";
  for (const InfluenceEntry& e : r.entries) {
    out << csv_quote(e.predictor) << ',' << format_double(e.score) << '\n';
  }
}

void write_margins_csv(const std::vector<MarginRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io error: cannot write " + path);
  out << "group,x,yhat\n";
  for (const MarginRow& r : rows) {
    out << csv_quote(r.group) << ',' << format_double(r.x) << ',' << format_double(r.yhat)
        << '\n';
  }
}

}  // namespace metboost
