#include "metboost/ensemble.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "metboost/kernels.hpp"
#include "metboost/node_design.hpp"
#include "metboost/rng.hpp"

namespace metboost {

const char* mode_name(Mode m) { return m == Mode::baseline ? "baseline" : "metboost"; }

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_params(const BoostParams& p) {
  if (p.n_trees < 1) throw std::invalid_argument("parameter error: n_trees must be >= 1");
  if (!(p.shrinkage > 0.0) || p.shrinkage > 1.0) {
    throw std::invalid_argument("parameter error: shrinkage must be in (0, 1]");
  }
  if (!(p.bag_fraction > 0.0) || p.bag_fraction > 1.0) {
    throw std::invalid_argument("parameter error: bag_fraction must be in (0, 1]");
  }
  if (p.tree.depth < 1) throw std::invalid_argument("parameter error: depth must be >= 1");
  if (p.tree.min_node < 1) throw std::invalid_argument("parameter error: min_node must be >= 1");
  if (p.tree.max_surrogates < 0) {
    throw std::invalid_argument("parameter error: surrogates must be >= 0");
  }
}

struct TrainingFrame {
  FeatureMatrix X;
  std::vector<double> group_codes;
  std::vector<std::uint8_t> group_codes_missing;
};

TrainingFrame make_training_frame(const Dataset& d, bool inject_group) {
  TrainingFrame tf;
  tf.X.n_rows = d.n_rows();
  for (const DataColumn& col : d.predictors) {
    FeatureColumn fc;
    fc.name = col.name;
    fc.categorical = col.categorical;
    fc.n_levels = static_cast<int>(col.levels.size());
    fc.values = col.values.data();
    fc.missing = col.missing.data();
    tf.X.cols.push_back(std::move(fc));
  }
  if (inject_group) {
    tf.group_codes.resize(d.n_rows());
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
      tf.group_codes[i] = static_cast<double>(d.group[i]);
    }
    tf.group_codes_missing.assign(d.n_rows(), 0);
    FeatureColumn fc;
    fc.name = d.id_name;
    fc.categorical = true;
    fc.n_levels = d.n_groups();
    fc.values = tf.group_codes.data();
    fc.missing = tf.group_codes_missing.data();
    tf.X.cols.push_back(std::move(fc));
  }
  tf.X.compute_any_missing();
  return tf;
}

BoostModel boost_core(const Dataset& d, const BoostParams& p, Mode mode) {
  check_params(p);
  d.validate();

  const bool inject = (mode == Mode::baseline) && p.inject_group;
  const TrainingFrame tf = make_training_frame(d, inject);
  const std::size_t n = d.n_rows();
  const int n_groups = d.n_groups();

  BoostModel model;
  model.mode = mode;
  model.shrinkage = p.shrinkage;
  model.params = p;
  model.outcome_name = d.outcome_name;
  model.id_name = d.id_name;
  model.group_labels = d.group_labels;
  for (std::size_t c = 0; c < tf.X.cols.size(); ++c) {
    const bool is_injected = inject && c + 1 == tf.X.cols.size();
    PredictorSchema s;
    s.name = tf.X.cols[c].name;
    s.categorical = tf.X.cols[c].categorical;
    if (s.categorical) s.levels = is_injected ? d.group_labels : d.predictors[c].levels;
    model.predictors.push_back(std::move(s));
  }
  model.group_col = inject ? static_cast<int>(tf.X.cols.size()) - 1 : -1;
  model.init = kernels::sum(d.outcome.data(), n) / static_cast<double>(n);

  std::vector<double> residual(d.outcome);
  for (double& v : residual) v -= model.init;

  Rng rng(mix_seed(p.seed, 0xB005Full));
  std::vector<double> stage_fit(n);
  model.stages.reserve(static_cast<std::size_t>(p.n_trees));

  for (int m = 0; m < p.n_trees; ++m) {
    const std::vector<int> rows = subsample(d, p.bag_fraction, rng);
    Stage st;
    st.tree = fit_tree(tf.X, residual, rows, p.tree);

    if (mode == Mode::metboost) {
      const NodeAssignment na = node_design(st.tree, tf.X, d.group, n_groups);
      st.mixed = fit_mixed_tree(na, residual, rows, p.force_zero_between);
      for (std::size_t i = 0; i < n; ++i) {
        const int node = na.node[i];
        stage_fit[i] = st.mixed.beta[static_cast<std::size_t>(node)] +
                       st.mixed.b[static_cast<std::size_t>(node * n_groups + na.group[i])];
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) stage_fit[i] = st.tree.predict_row(tf.X, i);
    }

    kernels::axpy(-p.shrinkage, stage_fit.data(), residual.data(), n);

    st.sse_reduction.assign(tf.X.cols.size(), 0.0);
    st.tree.accumulate_sse_reduction(st.sse_reduction);
    model.stages.push_back(std::move(st));
  }
  return model;
}

}  // namespace

BoostModel boost_baseline(const Dataset& d, const BoostParams& p) {
  return boost_core(d, p, Mode::baseline);
}

BoostModel boost_metboost(const Dataset& d, const BoostParams& p) {
  return boost_core(d, p, Mode::metboost);
}

// ---------------------------------------------------------------------------
// Prediction frames
// ---------------------------------------------------------------------------

namespace {

PredictionFrame frame_shell(const BoostModel& m, std::size_t n) {
  PredictionFrame f;
  f.X.n_rows = n;
  f.storage.resize(m.predictors.size());
  f.miss.resize(m.predictors.size());
  f.group_index.assign(n, -1);
  return f;
}

void finish_frame(const BoostModel& m, PredictionFrame& f) {
  for (std::size_t c = 0; c < m.predictors.size(); ++c) {
    FeatureColumn fc;
    fc.name = m.predictors[c].name;
    fc.categorical = m.predictors[c].categorical;
    fc.n_levels = static_cast<int>(m.predictors[c].levels.size());
    fc.values = f.storage[c].data();
    fc.missing = f.miss[c].data();
    f.X.cols.push_back(std::move(fc));
  }
  f.X.compute_any_missing();
}

std::unordered_map<std::string, int> index_of(const std::vector<std::string>& v) {
  std::unordered_map<std::string, int> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.emplace(v[i], static_cast<int>(i));
  return out;
}

}  // namespace

PredictionFrame build_frame(const BoostModel& m, const Dataset& d) {
  const std::size_t n = d.n_rows();
  PredictionFrame f = frame_shell(m, n);

  const auto model_groups = index_of(m.group_labels);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = model_groups.find(d.group_labels[static_cast<std::size_t>(d.group[i])]);
    f.group_index[i] = (it == model_groups.end()) ? -1 : it->second;
  }

  for (std::size_t c = 0; c < m.predictors.size(); ++c) {
    const PredictorSchema& s = m.predictors[c];
    f.storage[c].assign(n, kNaN);
    f.miss[c].assign(n, 0);

    if (static_cast<int>(c) == m.group_col) {
      for (std::size_t i = 0; i < n; ++i) {
        if (f.group_index[i] < 0) f.miss[c][i] = 1;  // unseen label routes like missing
        else f.storage[c][i] = static_cast<double>(f.group_index[i]);
      }
      continue;
    }

    const DataColumn* col = nullptr;
    for (const DataColumn& dc : d.predictors) {
      if (dc.name == s.name) {
        col = &dc;
        break;
      }
    }
    if (col == nullptr) {
      throw std::runtime_error("schema error: predictor column '" + s.name +
                               "' required by the model is missing from the data");
    }
    if (col->categorical != s.categorical) {
      throw std::runtime_error("schema error: predictor column '" + s.name +
                               "' type differs from the model");
    }
    if (!s.categorical) {
      for (std::size_t i = 0; i < n; ++i) {
        f.miss[c][i] = col->missing[i];
        f.storage[c][i] = col->values[i];
      }
    } else {
      const auto codes = index_of(s.levels);
      for (std::size_t i = 0; i < n; ++i) {
        if (col->missing[i]) {
          f.miss[c][i] = 1;
          continue;
        }
        const std::string& level = col->levels[static_cast<std::size_t>(col->values[i])];
        const auto it = codes.find(level);
        if (it == codes.end()) f.miss[c][i] = 1;  // unseen level
        else f.storage[c][i] = static_cast<double>(it->second);
      }
    }
  }
  finish_frame(m, f);
  return f;
}

PredictionFrame build_frame(const BoostModel& m, const CsvTable& t, const std::string& na_token) {
  const std::size_t n = t.rows.size();
  if (n == 0) throw std::runtime_error("empty-input error: no data rows to predict");
  PredictionFrame f = frame_shell(m, n);

  const int id_col = t.column(m.id_name);
  const auto model_groups = index_of(m.group_labels);
  if (id_col >= 0) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = model_groups.find(t.rows[i][static_cast<std::size_t>(id_col)]);
      f.group_index[i] = (it == model_groups.end()) ? -1 : it->second;
    }
  }

  for (std::size_t c = 0; c < m.predictors.size(); ++c) {
    const PredictorSchema& s = m.predictors[c];
    f.storage[c].assign(n, kNaN);
    f.miss[c].assign(n, 0);

    if (static_cast<int>(c) == m.group_col) {
      for (std::size_t i = 0; i < n; ++i) {
        if (f.group_index[i] < 0) f.miss[c][i] = 1;
        else f.storage[c][i] = static_cast<double>(f.group_index[i]);
      }
      continue;
    }

    const int tc = t.column(s.name);
    if (tc < 0) {
      throw std::runtime_error("schema error: predictor column '" + s.name +
                               "' required by the model is missing from the data");
    }
    const auto codes = s.categorical ? index_of(s.levels) : std::unordered_map<std::string, int>{};
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& cell = t.rows[i][static_cast<std::size_t>(tc)];
      if (cell.empty() || cell == na_token) {
        f.miss[c][i] = 1;
        continue;
      }
      if (s.categorical) {
        const auto it = codes.find(cell);
        if (it == codes.end()) f.miss[c][i] = 1;
        else f.storage[c][i] = static_cast<double>(it->second);
      } else {
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end != cell.c_str() + cell.size()) {
          throw std::runtime_error("data error: row " + std::to_string(i + 1) + ": cell '" +
                                   cell + "' in column " + s.name + " is not numeric");
        }
        f.storage[c][i] = v;
      }
    }
  }
  finish_frame(m, f);
  return f;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

namespace {

double stage_value(const BoostModel& m, const Stage& st, const PredictionFrame& f,
                   std::size_t row) {
  if (m.mode == Mode::baseline) return st.tree.predict_row(f.X, row);
  const int node = st.tree.assign_node(f.X, row);
  const int g = st.mixed.g;
  double v = st.mixed.beta[static_cast<std::size_t>(node)];
  const int gi = f.group_index[row];
  if (gi >= 0) v += st.mixed.b[static_cast<std::size_t>(node * g + gi)];
  return v;
}

}  // namespace

std::vector<double> predict(const BoostModel& m, const PredictionFrame& f, int n_stages) {
  if (n_stages < 0) n_stages = m.n_stages();
  if (n_stages > m.n_stages()) {
    throw std::invalid_argument("parameter error: requested " + std::to_string(n_stages) +
                                " stages, model has " + std::to_string(m.n_stages()));
  }
  std::vector<double> yhat(f.n_rows(), m.init);
  std::vector<double> fit(f.n_rows());
  for (int s = 0; s < n_stages; ++s) {
    const Stage& st = m.stages[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < f.n_rows(); ++i) fit[i] = stage_value(m, st, f, i);
    kernels::axpy(m.shrinkage, fit.data(), yhat.data(), yhat.size());
  }
  return yhat;
}

void predict_parts(const BoostModel& m, const PredictionFrame& f, std::vector<double>* fixed_part,
                   std::vector<double>* random_part) {
  fixed_part->assign(f.n_rows(), 0.0);
  random_part->assign(f.n_rows(), 0.0);
  for (const Stage& st : m.stages) {
    for (std::size_t i = 0; i < f.n_rows(); ++i) {
      if (m.mode == Mode::baseline) {
        (*fixed_part)[i] += m.shrinkage * st.tree.predict_row(f.X, i);
        continue;
      }
      const int node = st.tree.assign_node(f.X, i);
      (*fixed_part)[i] += m.shrinkage * st.mixed.beta[static_cast<std::size_t>(node)];
      const int gi = f.group_index[i];
      if (gi >= 0) {
        (*random_part)[i] +=
            m.shrinkage * st.mixed.b[static_cast<std::size_t>(node * st.mixed.g + gi)];
      }
    }
  }
}

std::vector<double> prediction_mse_curve(const BoostModel& m, const PredictionFrame& f,
                                         std::span<const double> y) {
  std::vector<double> yhat(f.n_rows(), m.init);
  std::vector<double> fit(f.n_rows());
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(m.n_stages()) + 1);
  curve.push_back(kernels::mse(yhat.data(), y.data(), y.size()));
  for (const Stage& st : m.stages) {
    for (std::size_t i = 0; i < f.n_rows(); ++i) fit[i] = stage_value(m, st, f, i);
    kernels::axpy(m.shrinkage, fit.data(), yhat.data(), yhat.size());
    curve.push_back(kernels::mse(yhat.data(), y.data(), y.size()));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Persistence: line-oriented text, versioned header, %.17g numerics
// ---------------------------------------------------------------------------

namespace {

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

std::string dir_string(const std::vector<std::int8_t>& dirs) {
  std::string out;
  out.reserve(dirs.size());
  for (std::int8_t d : dirs) out += (d == kDirLeft) ? 'L' : (d == kDirRight ? 'R' : 'U');
  return out;
}

std::vector<std::int8_t> parse_dir_string(const std::string& s) {
  std::vector<std::int8_t> out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == 'L') out.push_back(kDirLeft);
    else if (c == 'R') out.push_back(kDirRight);
    else out.push_back(kDirUnseen);
  }
  return out;
}

class LineReader;

// Token list with checked access that reports a format error (with the line
// number) instead of throwing out_of_range on truncated lines.
struct Line {
  std::vector<std::string> toks;
  const LineReader* reader = nullptr;

  const std::string& at(std::size_t i) const;
  std::size_t size() const { return toks.size(); }
  const std::string& operator[](std::size_t i) const { return at(i); }
};

class LineReader {
 public:
  LineReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  // Splits the next line into tokens; quoted tokens keep spaces.
  Line next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return Line{tokenize(line), this};
    }
    fail("unexpected end of file");
    return {};
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("format error: " + what_ + ": line " + std::to_string(line_no_) +
                             ": " + msg);
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> toks;
    std::size_t i = 0;
    while (i < line.size()) {
      if (line[i] == ' ') {
        ++i;
        continue;
      }
      std::string tok;
      if (line[i] == '"') {
        ++i;
        bool closed = false;
        while (i < line.size()) {
          if (line[i] == '\\' && i + 1 < line.size()) {
            tok += line[i + 1];
            i += 2;
          } else if (line[i] == '"') {
            ++i;
            closed = true;
            break;
          } else {
            tok += line[i++];
          }
        }
        if (!closed) fail("unterminated quoted token");
      } else {
        while (i < line.size() && line[i] != ' ') tok += line[i++];
      }
      toks.push_back(std::move(tok));
    }
    return toks;
  }

  std::istream& in_;
  std::string what_;
  std::size_t line_no_ = 0;
};

const std::string& Line::at(std::size_t i) const {
  if (i >= toks.size()) reader->fail("line truncated: missing field " + std::to_string(i + 1));
  return toks[i];
}

double to_double(LineReader& r, const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) r.fail("expected a number, got '" + tok + "'");
  return v;
}

long long to_int(LineReader& r, const std::string& tok) {
  char* end = nullptr;
  const long long v = std::strtoll(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size()) r.fail("expected an integer, got '" + tok + "'");
  return v;
}

std::uint64_t to_uint(LineReader& r, const std::string& tok) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty() || tok[0] == '-') {
    r.fail("expected an unsigned integer, got '" + tok + "'");
  }
  return v;
}

void expect(LineReader& r, const Line& line, std::size_t i, const std::string& word) {
  if (i >= line.size() || line.toks[i] != word) {
    r.fail("expected '" + word + "'" +
           (i < line.size() ? ", got '" + line.toks[i] + "'" : ""));
  }
}

void write_rule(std::ostream& out, const SplitRule& rule) {
  if (rule.categorical) out << " k " << dir_string(rule.level_dir);
  else out << " c " << format_double(rule.threshold);
}

}  // namespace

void save_model(const BoostModel& m, const std::string& path) {
  if (m.stages.empty()) {
    throw std::runtime_error("format error: refusing to save a model with zero stages");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io error: cannot write " + path);

  out << "metboost-model v1\n";
  out << "mode " << mode_name(m.mode) << "\n";
  out << "outcome " << quoted(m.outcome_name) << "\n";
  out << "id " << quoted(m.id_name) << "\n";
  out << "init " << format_double(m.init) << "\n";
  out << "shrinkage " << format_double(m.shrinkage) << "\n";
  out << "bag " << format_double(m.params.bag_fraction) << "\n";
  out << "depth " << m.params.tree.depth << "\n";
  out << "min_node " << m.params.tree.min_node << "\n";
  out << "surrogates " << m.params.tree.max_surrogates << "\n";
  out << "seed " << m.params.seed << "\n";
  out << "group_col " << m.group_col << "\n";

  out << "groups " << m.group_labels.size() << "\n";
  for (const std::string& g : m.group_labels) out << "g " << quoted(g) << "\n";

  out << "predictors " << m.predictors.size() << "\n";
  for (const PredictorSchema& s : m.predictors) {
    if (s.categorical) {
      out << "p cat " << quoted(s.name) << " " << s.levels.size();
      for (const std::string& l : s.levels) out << " " << quoted(l);
      out << "\n";
    } else {
      out << "p cont " << quoted(s.name) << "\n";
    }
  }

  out << "stages " << m.stages.size() << "\n";
  for (std::size_t si = 0; si < m.stages.size(); ++si) {
    const Stage& st = m.stages[si];
    out << "stage " << si << "\n";
    out << "tree " << st.tree.nodes.size() << " " << st.tree.n_leaves << "\n";
    for (std::size_t ni = 0; ni < st.tree.nodes.size(); ++ni) {
      const TreeNode& nd = st.tree.nodes[ni];
      if (nd.is_leaf()) {
        out << "n " << ni << " leaf " << format_double(nd.value) << " " << nd.count << " "
            << nd.leaf_index << "\n";
      } else {
        out << "n " << ni << " split " << nd.split.col;
        write_rule(out, nd.split);
        out << " " << format_double(nd.sse_reduction) << " def "
            << (nd.default_left ? "L" : "R") << " kids " << nd.left << " " << nd.right
            << " val " << format_double(nd.value) << " " << nd.count << " sur "
            << nd.surrogates.size() << "\n";
        for (const Surrogate& s : nd.surrogates) {
          out << "s " << s.rule.col;
          write_rule(out, s.rule);
          out << " " << (s.swap ? 1 : 0) << " " << format_double(s.agreement) << "\n";
        }
      }
    }
    if (m.mode == Mode::metboost) {
      const MixedTreeFit& mf = st.mixed;
      out << "mixed " << mf.k << " " << mf.g << "\n";
      for (int j = 0; j < mf.k; ++j) {
        out << "c " << j << " " << format_double(mf.comps[static_cast<std::size_t>(j)].between)
            << " " << format_double(mf.comps[static_cast<std::size_t>(j)].within) << " "
            << format_double(mf.beta[static_cast<std::size_t>(j)]) << "\n";
      }
      std::size_t nb = 0;
      for (std::size_t c = 0; c < mf.b.size(); ++c) {
        if (mf.b[c] != 0.0 || mf.omega[c] != 0.0) ++nb;
      }
      out << "bn " << nb << "\n";
      for (int j = 0; j < mf.k; ++j) {
        for (int gi = 0; gi < mf.g; ++gi) {
          const std::size_t c = static_cast<std::size_t>(j * mf.g + gi);
          if (mf.b[c] == 0.0 && mf.omega[c] == 0.0) continue;
          out << "b " << j << " " << gi << " " << format_double(mf.b[c]) << " "
              << format_double(mf.omega[c]) << "\n";
        }
      }
    }
    out << "sse " << st.sse_reduction.size();
    for (double v : st.sse_reduction) out << " " << format_double(v);
    out << "\n";
  }
  out << "end\n";
  if (!out) throw std::runtime_error("io error: failed writing " + path);
}

BoostModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("io error: cannot open " + path);
  LineReader r(in, path);

  {
    const auto toks = r.next();
    if (toks.size() != 2 || toks[0] != "metboost-model") r.fail("not a metboost model file");
    if (toks[1] != "v1") r.fail("unsupported model version '" + toks[1] + "'");
  }

  BoostModel m;
  auto line = r.next();
  expect(r, line, 0, "mode");
  if (line.at(1) == "baseline") m.mode = Mode::baseline;
  else if (line.at(1) == "metboost") m.mode = Mode::metboost;
  else r.fail("unknown mode '" + line.at(1) + "'");

  line = r.next();
  expect(r, line, 0, "outcome");
  m.outcome_name = line.at(1);
  line = r.next();
  expect(r, line, 0, "id");
  m.id_name = line.at(1);
  line = r.next();
  expect(r, line, 0, "init");
  m.init = to_double(r, line.at(1));
  line = r.next();
  expect(r, line, 0, "shrinkage");
  m.shrinkage = to_double(r, line.at(1));
  m.params.shrinkage = m.shrinkage;
  line = r.next();
  expect(r, line, 0, "bag");
  m.params.bag_fraction = to_double(r, line.at(1));
  line = r.next();
  expect(r, line, 0, "depth");
  m.params.tree.depth = static_cast<int>(to_int(r, line.at(1)));
  line = r.next();
  expect(r, line, 0, "min_node");
  m.params.tree.min_node = static_cast<int>(to_int(r, line.at(1)));
  line = r.next();
  expect(r, line, 0, "surrogates");
  m.params.tree.max_surrogates = static_cast<int>(to_int(r, line.at(1)));
  line = r.next();
  expect(r, line, 0, "seed");
  m.params.seed = to_uint(r, line.at(1));
  line = r.next();
  expect(r, line, 0, "group_col");
  m.group_col = static_cast<int>(to_int(r, line.at(1)));

  line = r.next();
  expect(r, line, 0, "groups");
  const long long n_groups = to_int(r, line.at(1));
  for (long long i = 0; i < n_groups; ++i) {
    line = r.next();
    expect(r, line, 0, "g");
    m.group_labels.push_back(line.at(1));
  }

  line = r.next();
  expect(r, line, 0, "predictors");
  const long long n_preds = to_int(r, line.at(1));
  for (long long i = 0; i < n_preds; ++i) {
    line = r.next();
    expect(r, line, 0, "p");
    PredictorSchema s;
    if (line.at(1) == "cont") {
      s.name = line.at(2);
    } else if (line.at(1) == "cat") {
      s.categorical = true;
      s.name = line.at(2);
      const long long nl = to_int(r, line.at(3));
      if (static_cast<long long>(line.size()) != 4 + nl) r.fail("level count mismatch");
      for (long long l = 0; l < nl; ++l) s.levels.push_back(line.at(4 + static_cast<std::size_t>(l)));
    } else {
      r.fail("unknown predictor type '" + line.at(1) + "'");
    }
    m.predictors.push_back(std::move(s));
  }

  line = r.next();
  expect(r, line, 0, "stages");
  const long long n_stages = to_int(r, line.at(1));
  if (n_stages < 1) r.fail("model must have at least one stage");

  auto read_rule = [&](const Line& toks, std::size_t& i, SplitRule& rule) {
    if (toks.at(i) == "c") {
      rule.categorical = false;
      rule.threshold = to_double(r, toks.at(i + 1));
      i += 2;
    } else if (toks.at(i) == "k") {
      rule.categorical = true;
      rule.level_dir = parse_dir_string(toks.at(i + 1));
      i += 2;
    } else {
      r.fail("expected rule kind 'c' or 'k'");
    }
  };

  for (long long si = 0; si < n_stages; ++si) {
    line = r.next();
    expect(r, line, 0, "stage");
    if (to_int(r, line.at(1)) != si) r.fail("stage index out of order");

    line = r.next();
    expect(r, line, 0, "tree");
    const long long n_nodes = to_int(r, line.at(1));
    const long long n_leaves = to_int(r, line.at(2));
    if (n_nodes < 1) r.fail("tree must have at least one node");

    Stage st;
    st.tree.n_leaves = static_cast<int>(n_leaves);
    st.tree.nodes.resize(static_cast<std::size_t>(n_nodes));
    for (long long ni = 0; ni < n_nodes; ++ni) {
      line = r.next();
      expect(r, line, 0, "n");
      if (to_int(r, line.at(1)) != ni) r.fail("node index out of order");
      TreeNode& nd = st.tree.nodes[static_cast<std::size_t>(ni)];
      if (line.at(2) == "leaf") {
        nd.value = to_double(r, line.at(3));
        nd.count = static_cast<int>(to_int(r, line.at(4)));
        nd.leaf_index = static_cast<int>(to_int(r, line.at(5)));
      } else if (line.at(2) == "split") {
        nd.split.col = static_cast<int>(to_int(r, line.at(3)));
        std::size_t i = 4;
        read_rule(line, i, nd.split);
        nd.sse_reduction = to_double(r, line.at(i++));
        expect(r, line, i, "def");
        ++i;
        nd.default_left = (line.at(i++) == "L");
        expect(r, line, i, "kids");
        ++i;
        nd.left = static_cast<int>(to_int(r, line.at(i++)));
        nd.right = static_cast<int>(to_int(r, line.at(i++)));
        expect(r, line, i, "val");
        ++i;
        nd.value = to_double(r, line.at(i++));
        nd.count = static_cast<int>(to_int(r, line.at(i++)));
        expect(r, line, i, "sur");
        ++i;
        const long long ns = to_int(r, line.at(i));
        if (nd.left < 0 || nd.left >= n_nodes || nd.right < 0 || nd.right >= n_nodes) {
          r.fail("child index out of range");
        }
        for (long long s = 0; s < ns; ++s) {
          auto sl = r.next();
          expect(r, sl, 0, "s");
          Surrogate sur;
          sur.rule.col = static_cast<int>(to_int(r, sl.at(1)));
          std::size_t j = 2;
          read_rule(sl, j, sur.rule);
          sur.swap = to_int(r, sl.at(j++)) != 0;
          sur.agreement = to_double(r, sl.at(j++));
          nd.surrogates.push_back(std::move(sur));
        }
      } else {
        r.fail("unknown node kind '" + line.at(2) + "'");
      }
    }

    if (m.mode == Mode::metboost) {
      line = r.next();
      expect(r, line, 0, "mixed");
      st.mixed.k = static_cast<int>(to_int(r, line.at(1)));
      st.mixed.g = static_cast<int>(to_int(r, line.at(2)));
      if (st.mixed.k != st.tree.n_leaves) r.fail("mixed fit size differs from tree leaves");
      if (st.mixed.g != static_cast<int>(m.group_labels.size())) {
        r.fail("mixed fit group count differs from the registry");
      }
      st.mixed.beta.assign(static_cast<std::size_t>(st.mixed.k), 0.0);
      st.mixed.comps.assign(static_cast<std::size_t>(st.mixed.k), {});
      st.mixed.b.assign(static_cast<std::size_t>(st.mixed.k) * st.mixed.g, 0.0);
      st.mixed.omega.assign(st.mixed.b.size(), 0.0);
      for (int j = 0; j < st.mixed.k; ++j) {
        line = r.next();
        expect(r, line, 0, "c");
        if (to_int(r, line.at(1)) != j) r.fail("component index out of order");
        st.mixed.comps[static_cast<std::size_t>(j)].between = to_double(r, line.at(2));
        st.mixed.comps[static_cast<std::size_t>(j)].within = to_double(r, line.at(3));
        st.mixed.beta[static_cast<std::size_t>(j)] = to_double(r, line.at(4));
      }
      line = r.next();
      expect(r, line, 0, "bn");
      const long long nb = to_int(r, line.at(1));
      for (long long x = 0; x < nb; ++x) {
        line = r.next();
        expect(r, line, 0, "b");
        const long long j = to_int(r, line.at(1));
        const long long gi = to_int(r, line.at(2));
        if (j < 0 || j >= st.mixed.k || gi < 0 || gi >= st.mixed.g) {
          r.fail("b cell index out of range");
        }
        const std::size_t c = static_cast<std::size_t>(j * st.mixed.g + gi);
        st.mixed.b[c] = to_double(r, line.at(3));
        st.mixed.omega[c] = to_double(r, line.at(4));
      }
    }

    line = r.next();
    expect(r, line, 0, "sse");
    const long long np = to_int(r, line.at(1));
    if (np != static_cast<long long>(m.predictors.size())) r.fail("sse vector size mismatch");
    st.sse_reduction.resize(static_cast<std::size_t>(np));
    for (long long i = 0; i < np; ++i) {
      st.sse_reduction[static_cast<std::size_t>(i)] =
          to_double(r, line.at(2 + static_cast<std::size_t>(i)));
    }
    m.stages.push_back(std::move(st));
  }

  line = r.next();
  expect(r, line, 0, "end");
  return m;
}

}  // namespace metboost
