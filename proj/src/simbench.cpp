#include "metboost/simbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "metboost/interpret.hpp"
#include "metboost/kernels.hpp"
#include "metboost/rng.hpp"

namespace metboost {

double sim_transform(int id, double x) {
  switch (id) {
    case 0: return x;
    case 1: return x * x;
    case 2: return std::sqrt(std::fabs(x));
    case 3: return std::cos(M_PI * x);
    case 4: return std::fabs(std::sin(M_PI * x));
    default: throw std::invalid_argument("parameter error: unknown transform id");
  }
}

int SimConfig::n_groups() const {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(n) / group_size)));
}

void SimConfig::validate() const {
  if (n < 1) throw std::invalid_argument("parameter error: n must be >= 1");
  if (n_predictors < 1) throw std::invalid_argument("parameter error: P must be >= 1");
  if (n_active < 1 || n_active > n_predictors) {
    throw std::invalid_argument("parameter error: p must be in [1, P]");
  }
  if (n_random < 0 || n_random > n_active) {
    throw std::invalid_argument("parameter error: q must be in [0, p]");
  }
  if (group_size < 1) throw std::invalid_argument("parameter error: group size must be >= 1");
  if (!(icc > 0.0) || !(icc < 1.0)) {
    throw std::invalid_argument("parameter error: ICC must be in (0, 1)");
  }
  if (!(r2 > 0.0) || !(r2 < 1.0)) {
    throw std::invalid_argument("parameter error: R2 must be in (0, 1)");
  }
}

double calibrate_beta(double r2, double random_plus_noise_var, double fixed_sum_var) {
  if (!(fixed_sum_var > 0.0)) {
    throw std::invalid_argument("degenerate variance: fixed-effect design has zero variance");
  }
  if (!(r2 >= 0.0) || !(r2 < 1.0)) {
    throw std::invalid_argument("parameter error: R2 must be in [0, 1)");
  }
  return std::sqrt(r2 * random_plus_noise_var / ((1.0 - r2) * fixed_sum_var));
}

namespace {

double sample_variance(std::span<const double> v) {
  const double mean = kernels::sum(v.data(), v.size()) / static_cast<double>(v.size());
  return kernels::sse_about(v.data(), v.size(), mean) / static_cast<double>(v.size());
}

std::vector<int> block_groups(int n, int g) {
  // sizes as even as possible: n/g each, remainder spread over the first groups
  std::vector<int> out(static_cast<std::size_t>(n));
  const int base = n / g;
  const int rem = n % g;
  int row = 0;
  for (int gi = 0; gi < g; ++gi) {
    const int size = base + (gi < rem ? 1 : 0);
    for (int j = 0; j < size; ++j) out[static_cast<std::size_t>(row++)] = gi;
  }
  return out;
}

Dataset assemble_dataset(const std::vector<std::vector<double>>& x_cols,
                         const std::vector<double>& y, const std::vector<int>& groups, int g) {
  Dataset d;
  d.outcome_name = "y";
  d.id_name = "group";
  d.outcome = y;
  d.group = groups;
  d.group_labels.reserve(static_cast<std::size_t>(g));
  for (int gi = 0; gi < g; ++gi) d.group_labels.push_back("g" + std::to_string(gi + 1));
  const std::size_t n = y.size();
  for (std::size_t j = 0; j < x_cols.size(); ++j) {
    DataColumn col;
    col.name = "x" + std::to_string(j + 1);
    col.values = x_cols[j];
    col.missing.assign(n, 0);
    d.predictors.push_back(std::move(col));
  }
  d.rebuild_group_index();
  return d;
}

}  // namespace

std::tuple<Dataset, Dataset, SimTruth> gen_sim_data(const SimConfig& cfg) {
  cfg.validate();
  const int n = cfg.n;
  const int P = cfg.n_predictors;
  const int p = cfg.n_active;
  const int q = cfg.n_random;
  const int g = cfg.n_groups();
  const std::vector<int> groups = block_groups(n, g);

  Rng rng(mix_seed(cfg.seed, 0x51Cull));

  // Draw order is fixed: train X by column, active set, transforms, b,
  // train noise, test X by column, test noise.
  auto draw_x = [&]() {
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(P));
    for (int j = 0; j < P; ++j) {
      cols[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = rng.normal();
    }
    return cols;
  };
  const std::vector<std::vector<double>> x_train = draw_x();

  SimTruth truth;
  {
    std::vector<int> pool(static_cast<std::size_t>(P));
    for (int j = 0; j < P; ++j) pool[static_cast<std::size_t>(j)] = j;
    for (int j = 0; j < p; ++j) {
      const int pick = j + rng.below(P - j);
      std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick)]);
    }
    truth.active.assign(pool.begin(), pool.begin() + p);
    std::sort(truth.active.begin(), truth.active.end());
  }
  truth.transform.assign(static_cast<std::size_t>(p), 0);
  if (cfg.effect == EffectType::nonlinear) {
    for (int j = 0; j < p; ++j) truth.transform[static_cast<std::size_t>(j)] = rng.below(5);
  }
  truth.b.resize(static_cast<std::size_t>(g) * static_cast<std::size_t>(q));
  for (double& v : truth.b) v = rng.normal();
  truth.sigma2 = (1.0 - cfg.icc) / cfg.icc;

  const double noise_sd = std::sqrt(truth.sigma2);
  std::vector<double> e_train(static_cast<std::size_t>(n));
  for (double& v : e_train) v = rng.normal() * noise_sd;
  const std::vector<std::vector<double>> x_test = draw_x();
  std::vector<double> e_test(static_cast<std::size_t>(n));
  for (double& v : e_test) v = rng.normal() * noise_sd;

  // Signal components on a given X draw.
  auto components = [&](const std::vector<std::vector<double>>& x, std::vector<double>* fixed_sum,
                        std::vector<double>* zb) {
    fixed_sum->assign(static_cast<std::size_t>(n), 0.0);
    zb->assign(static_cast<std::size_t>(n), 0.0);
    for (int a = 0; a < p; ++a) {
      const std::vector<double>& col = x[static_cast<std::size_t>(truth.active[static_cast<std::size_t>(a)])];
      const int f = truth.transform[static_cast<std::size_t>(a)];
      for (int i = 0; i < n; ++i) {
        const double xs = sim_transform(f, col[static_cast<std::size_t>(i)]);
        (*fixed_sum)[static_cast<std::size_t>(i)] += xs;
        if (a < q) {
          (*zb)[static_cast<std::size_t>(i)] +=
              xs * truth.b[static_cast<std::size_t>(groups[static_cast<std::size_t>(i)] * q + a)];
        }
      }
    }
  };

  std::vector<double> fixed_train, zb_train;
  components(x_train, &fixed_train, &zb_train);
  const double var_random = (q > 0) ? sample_variance(zb_train) : 0.0;
  truth.beta = calibrate_beta(cfg.r2, var_random + truth.sigma2, sample_variance(fixed_train));

  std::vector<double> y_train(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    y_train[ii] = truth.beta * fixed_train[ii] + zb_train[ii] + e_train[ii];
  }

  std::vector<double> fixed_test, zb_test;
  components(x_test, &fixed_test, &zb_test);
  std::vector<double> y_test(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    y_test[ii] = truth.beta * fixed_test[ii] + zb_test[ii] + e_test[ii];
  }

  return {assemble_dataset(x_train, y_train, groups, g),
          assemble_dataset(x_test, y_test, groups, g), std::move(truth)};
}

double auc_variable_selection(std::span<const double> scores,
                              std::span<const std::uint8_t> active) {
  if (scores.size() != active.size() || scores.size() < 2) {
    throw std::invalid_argument("parameter error: need aligned scores and truth, P >= 2");
  }
  std::size_t n1 = 0;
  for (std::uint8_t a : active) n1 += (a != 0);
  const std::size_t n0 = scores.size() - n1;
  if (n1 == 0 || n0 == 0) {
    throw std::invalid_argument("parameter error: degenerate truth (all or none active)");
  }
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!active[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (active[j]) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(n1) * static_cast<double>(n0));
}

namespace {

struct MethodOutcome {
  double mspe = 0.0;
  double auc = 0.0;  // NaN when the truth is degenerate (all predictors active)
};

MethodOutcome evaluate_method(const MethodSpec& spec, const Dataset& train, const Dataset& test,
                              const SimTruth& truth, int P, std::uint64_t seed, int cores) {
  TuneGrid grid = spec.grid;
  grid.seed = seed;
  const TuneResult res = cv_tune(train, grid, spec.mode, cores, nullptr);

  const PredictionFrame frame = build_frame(res.model, test);
  const std::vector<double> yhat = predict(res.model, frame);

  MethodOutcome out;
  out.mspe = kernels::mse(yhat.data(), test.outcome.data(), yhat.size());

  if (static_cast<int>(truth.active.size()) == P || truth.active.empty()) {
    out.auc = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const InfluenceReport rep = relative_influence(res.model, spec.mode == Mode::baseline);
  std::vector<double> scores(static_cast<std::size_t>(P));
  for (int j = 0; j < P; ++j) scores[static_cast<std::size_t>(j)] = rep.entries[static_cast<std::size_t>(j)].score;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(P), 0);
  for (int a : truth.active) mask[static_cast<std::size_t>(a)] = 1;
  out.auc = auc_variable_selection(scores, mask);
  return out;
}

}  // namespace

std::vector<BenchSummary> run_benchmark(std::span<const SimConfig> conditions, int reps,
                                        const MethodSpec& method_a, const MethodSpec& method_b,
                                        std::uint64_t seed, int cores, std::ostream* results_csv,
                                        std::ostream* progress) {
  if (reps < 1) throw std::invalid_argument("parameter error: reps must be >= 1");
  if (results_csv != nullptr) {
    *results_csv << "condition,rep,method,n,P,p,q,effect,group_size,icc,r2,mspe,auc\n";
  }

  std::vector<BenchSummary> summaries;
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    BenchSummary s;
    s.condition = static_cast<int>(ci) + 1;
    s.reps = reps;
    double sum_mspe_imp = 0.0, sum_auc_imp = 0.0;
    int auc_reps = 0;

    for (int rep = 0; rep < reps; ++rep) {
      SimConfig cfg = conditions[ci];
      cfg.seed = mix_seed(seed, ci, static_cast<std::uint64_t>(rep));
      auto [train, test, truth] = gen_sim_data(cfg);

      const MethodSpec* specs[2] = {&method_a, &method_b};
      MethodOutcome outcome[2];
      for (int mi = 0; mi < 2; ++mi) {
        const std::uint64_t tune_seed =
            mix_seed(cfg.seed, 0x7BEull, static_cast<std::uint64_t>(specs[mi]->mode));
        outcome[mi] = evaluate_method(*specs[mi], train, test, truth, cfg.n_predictors,
                                      tune_seed, cores);
        if (results_csv != nullptr) {
          *results_csv << s.condition << ',' << (rep + 1) << ',' << specs[mi]->label << ','
                       << cfg.n << ',' << cfg.n_predictors << ',' << cfg.n_active << ','
                       << cfg.n_random << ','
                       << (cfg.effect == EffectType::linear ? "linear" : "nonlinear") << ','
                       << cfg.group_size << ',' << format_double(cfg.icc) << ','
                       << format_double(cfg.r2) << ',' << format_double(outcome[mi].mspe) << ','
                       << format_double(outcome[mi].auc) << "\n" << std::flush;
        }
        if (progress != nullptr) {
          *progress << "condition " << s.condition << " rep " << (rep + 1) << " "
                    << specs[mi]->label << ": mspe=" << outcome[mi].mspe
                    << " auc=" << outcome[mi].auc << "\n" << std::flush;
        }
      }

      const double mspe_imp = 100.0 * (outcome[0].mspe - outcome[1].mspe) / outcome[0].mspe;
      sum_mspe_imp += mspe_imp;
      if (outcome[1].mspe < outcome[0].mspe) ++s.mspe_wins;
      if (std::isfinite(outcome[0].auc) && std::isfinite(outcome[1].auc)) {
        sum_auc_imp += 100.0 * (outcome[1].auc - outcome[0].auc) / outcome[0].auc;
        ++auc_reps;
        if (outcome[1].auc > outcome[0].auc) ++s.auc_wins;
      }
    }

    s.mean_mspe_improvement = sum_mspe_imp / reps;
    s.mean_auc_improvement = (auc_reps > 0) ? sum_auc_imp / auc_reps : 0.0;
    summaries.push_back(s);
  }
  return summaries;
}

void write_bench_summary(std::span<const BenchSummary> summaries, std::ostream& out) {
  out << "condition,reps,mean_mspe_improvement_pct,mean_auc_improvement_pct,mspe_wins,auc_wins\n";
  for (const BenchSummary& s : summaries) {
    out << s.condition << ',' << s.reps << ',' << format_double(s.mean_mspe_improvement) << ','
        << format_double(s.mean_auc_improvement) << ',' << s.mspe_wins << ',' << s.auc_wins
        << '\n';
  }
}

std::vector<SimConfig> read_conditions_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_n = t.column("n");
  const int c_P = t.column("P");
  const int c_p = t.column("p");
  const int c_q = t.column("q");
  const int c_eff = t.column("effect");
  const int c_gs = t.column("group_size");
  const int c_icc = t.column("icc");
  const int c_r2 = t.column("r2");
  if (c_n < 0 || c_P < 0 || c_q < 0 || c_eff < 0 || c_gs < 0 || c_icc < 0 || c_r2 < 0) {
    throw std::runtime_error(
        "schema error: condition file needs columns n,P,q,effect,group_size,icc,r2 (p optional)");
  }
  std::vector<SimConfig> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    SimConfig cfg;
    cfg.n = std::atoi(row[static_cast<std::size_t>(c_n)].c_str());
    cfg.n_predictors = std::atoi(row[static_cast<std::size_t>(c_P)].c_str());
    cfg.n_random = std::atoi(row[static_cast<std::size_t>(c_q)].c_str());
    if (c_p >= 0 && !row[static_cast<std::size_t>(c_p)].empty()) {
      cfg.n_active = std::atoi(row[static_cast<std::size_t>(c_p)].c_str());
    } else {
      // 25% of P, but at least q so the config stays valid
      cfg.n_active = std::max(cfg.n_random,
                              static_cast<int>(std::lround(0.25 * cfg.n_predictors)));
    }
    const std::string& eff = row[static_cast<std::size_t>(c_eff)];
    if (eff == "linear") cfg.effect = EffectType::linear;
    else if (eff == "nonlinear") cfg.effect = EffectType::nonlinear;
    else throw std::runtime_error("data error: row " + std::to_string(i + 1) +
                                  ": effect must be linear or nonlinear");
    cfg.group_size = std::atoi(row[static_cast<std::size_t>(c_gs)].c_str());
    cfg.icc = std::atof(row[static_cast<std::size_t>(c_icc)].c_str());
    cfg.r2 = std::atof(row[static_cast<std::size_t>(c_r2)].c_str());
    cfg.validate();
    out.push_back(cfg);
  }
  if (out.empty()) throw std::runtime_error("empty-input error: condition file has no rows");
  return out;
}

void write_truth_csv(const SimConfig& cfg, const SimTruth& truth, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io error: cannot write " + path);
  out << "predictor,active,transform,beta,sigma2,icc\n";
  std::vector<int> transform_of(static_cast<std::size_t>(cfg.n_predictors), -1);
  std::vector<std::uint8_t> active_of(static_cast<std::size_t>(cfg.n_predictors), 0);
  for (std::size_t a = 0; a < truth.active.size(); ++a) {
    active_of[static_cast<std::size_t>(truth.active[a])] = 1;
    transform_of[static_cast<std::size_t>(truth.active[a])] = truth.transform[a];
  }
  for (int j = 0; j < cfg.n_predictors; ++j) {
    const auto js = static_cast<std::size_t>(j);
    out << "x" << (j + 1) << ',' << int(active_of[js]) << ',' << transform_of[js] << ','
        << format_double(active_of[js] ? truth.beta : 0.0) << ','
        << format_double(truth.sigma2) << ',' << format_double(cfg.icc) << '\n';
  }
}

}  // namespace metboost
