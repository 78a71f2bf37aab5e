// metboost command line: fit, predict, influence, margins, tune, simulate,
// bench. All commands are deterministic functions of (input files, flags,
// seed). Flag names mirror the R-style meta-parameters: --n-trees (n.trees),
// --depth (interaction.depth), --shrinkage (shrinkage), --bag-fraction
// (bag.fraction), --cv-folds (cv.folds), --cores (mc.cores).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metboost/csv.hpp"
#include "metboost/data.hpp"
#include "metboost/ensemble.hpp"
#include "metboost/interpret.hpp"
#include "metboost/kernels.hpp"
#include "metboost/simbench.hpp"
#include "metboost/tune.hpp"

namespace {

using namespace metboost;

struct CommonOpts {
  std::string na_token = "NA";
  std::string kernels = "auto";
  std::uint64_t seed = 0;
  int cores = 1;
};

void apply_kernels(const std::string& choice) {
  if (choice == "auto") return;
  if (choice == "scalar") kernels::force(kernels::Backend::scalar);
  else if (choice == "avx2") kernels::force(kernels::Backend::avx2);
  else throw CLI::ValidationError("--kernels must be auto, scalar, or avx2");
}

void add_common(CLI::App* cmd, CommonOpts* c) {
  cmd->add_option("--na", c->na_token, "Missing-value token in CSV input")
      ->capture_default_str();
  cmd->add_option("--seed", c->seed, "Master random seed")->capture_default_str();
  cmd->add_option("--kernels", c->kernels, "Arithmetic backend: auto, scalar, avx2")
      ->capture_default_str();
}

struct FitOpts {
  std::string data, outcome, id, out = "model.mbt";
  bool baseline = false;
  int n_trees = 2500;
  double shrinkage = 0.01;
  int depth = 3;
  int min_node = 20;
  int surrogates = 5;
  double bag = 0.5;
};

void add_fit_params(CLI::App* cmd, FitOpts* f) {
  cmd->add_option("--n-trees", f->n_trees, "Number of boosting stages (n.trees)")
      ->capture_default_str();
  cmd->add_option("--shrinkage", f->shrinkage, "Step size in (0,1] (shrinkage)")
      ->capture_default_str();
  cmd->add_option("--depth", f->depth, "Max tree depth, 1 = single split (interaction.depth)")
      ->capture_default_str();
  cmd->add_option("--min-node", f->min_node, "Minimum observations per terminal node")
      ->capture_default_str();
  cmd->add_option("--surrogates", f->surrogates, "Max surrogate splits per node")
      ->capture_default_str();
  cmd->add_option("--bag-fraction", f->bag, "Per-stage subsample fraction (bag.fraction)")
      ->capture_default_str();
  cmd->add_flag("--baseline", f->baseline,
                "Plain boosted trees with the grouping variable as a categorical predictor");
}

BoostParams to_params(const FitOpts& f, const CommonOpts& c) {
  BoostParams p;
  p.n_trees = f.n_trees;
  p.shrinkage = f.shrinkage;
  p.tree.depth = f.depth;
  p.tree.min_node = f.min_node;
  p.tree.max_surrogates = f.surrogates;
  p.bag_fraction = f.bag;
  p.seed = c.seed;
  return p;
}

void print_fit_summary(const BoostModel& model, const Dataset& d) {
  const PredictionFrame frame = build_frame(model, d);
  const std::vector<double> yhat = predict(model, frame);
  const double train_mse = kernels::mse(yhat.data(), d.outcome.data(), yhat.size());
  std::cout << "mode: " << mode_name(model.mode) << "\n"
            << "rows: " << d.n_rows() << ", predictors: " << d.n_predictors()
            << ", groups: " << d.n_groups() << "\n"
            << "stages: " << model.n_stages() << ", shrinkage: " << model.shrinkage
            << ", depth: " << model.params.tree.depth << "\n"
            << "training mse: " << train_mse << "\n";
  const InfluenceReport rep = relative_influence(model, false);
  std::vector<InfluenceEntry> top = rep.entries;
  std::sort(top.begin(), top.end(),
            [](const InfluenceEntry& a, const InfluenceEntry& b) { return a.score > b.score; });
  std::cout << "top influence:";
  for (std::size_t i = 0; i < top.size() && i < 5; ++i) {
    std::printf(" %s=%.2f", top[i].predictor.c_str(), top[i].score);
  }
  std::cout << "\n";
}

std::vector<std::string> split_labels(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metboost: mixed-effects gradient tree boosting for clustered regression data"};
  app.require_subcommand(1);

  // ---- fit -----------------------------------------------------------------
  CommonOpts fit_common;
  FitOpts fit_opts;
  CLI::App* fit = app.add_subcommand("fit", "Train a model and write a model file");
  fit->add_option("--data", fit_opts.data, "Training CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--outcome", fit_opts.outcome, "Outcome column name")->required();
  fit->add_option("--id", fit_opts.id, "Grouping (id) column name")->required();
  fit->add_option("--out", fit_opts.out, "Model file to write")->capture_default_str();
  add_fit_params(fit, &fit_opts);
  add_common(fit, &fit_common);

  // ---- predict ---------------------------------------------------------------
  CommonOpts pred_common;
  std::string pred_model, pred_data, pred_out;
  int pred_m = -1;
  CLI::App* pred = app.add_subcommand("predict", "Predict a CSV with a saved model");
  pred->add_option("--model", pred_model, "Model file")->required()->check(CLI::ExistingFile);
  pred->add_option("--data", pred_data, "CSV to predict (unseen groups allowed)")
      ->required()
      ->check(CLI::ExistingFile);
  pred->add_option("--out", pred_out, "Output CSV (default stdout)");
  pred->add_option("--m", pred_m, "Number of stages to use (default all)");
  add_common(pred, &pred_common);

  // ---- influence -------------------------------------------------------------
  CommonOpts infl_common;
  std::string infl_model, infl_out;
  bool infl_exclude = false;
  CLI::App* infl = app.add_subcommand("influence", "Relative influence of predictors");
  infl->add_option("--model", infl_model, "Model file")->required()->check(CLI::ExistingFile);
  infl->add_option("--out", infl_out, "Output CSV (default stdout)");
  infl->add_flag("--exclude-group", infl_exclude,
                 "Zero the grouping variable's influence before normalizing (baseline parity)");
  add_common(infl, &infl_common);

  // ---- margins ---------------------------------------------------------------
  CommonOpts marg_common;
  std::string marg_model, marg_data, marg_pred, marg_groups, marg_out;
  CLI::App* marg = app.add_subcommand("margins", "Group-specific yhat-vs-predictor table");
  marg->add_option("--model", marg_model, "Model file")->required()->check(CLI::ExistingFile);
  marg->add_option("--data", marg_data, "CSV with rows to profile")
      ->required()
      ->check(CLI::ExistingFile);
  marg->add_option("--predictor", marg_pred, "Predictor to profile")->required();
  marg->add_option("--groups", marg_groups, "Comma-separated group labels (default all)");
  marg->add_option("--out", marg_out, "Output CSV (default stdout)");
  add_common(marg, &marg_common);

  // ---- tune ------------------------------------------------------------------
  CommonOpts tune_common;
  FitOpts tune_base;  // reuse data/outcome/id/baseline
  std::vector<double> tune_shrinkage{0.01};
  std::vector<int> tune_depth{3};
  std::vector<int> tune_min_node{20};
  int tune_trees = 2500, tune_folds = 3;
  double tune_bag = 0.5;
  int tune_surrogates = 5;
  std::string tune_report = "tune_report.csv", tune_model_out = "model.mbt";
  CLI::App* tune_cmd = app.add_subcommand("tune", "K-fold CV grid search, then refit");
  tune_cmd->add_option("--data", tune_base.data, "Training CSV")
      ->required()
      ->check(CLI::ExistingFile);
  tune_cmd->add_option("--outcome", tune_base.outcome, "Outcome column name")->required();
  tune_cmd->add_option("--id", tune_base.id, "Grouping (id) column name")->required();
  tune_cmd->add_option("--shrinkage", tune_shrinkage, "Candidate step sizes (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  tune_cmd->add_option("--depth", tune_depth, "Candidate depths (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  tune_cmd->add_option("--min-node", tune_min_node, "Candidate minimum node sizes (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  tune_cmd->add_option("--n-trees", tune_trees, "Max stages per fit (n.trees)")
      ->capture_default_str();
  tune_cmd->add_option("--cv-folds", tune_folds, "Cross-validation folds (cv.folds)")
      ->capture_default_str();
  tune_cmd->add_option("--bag-fraction", tune_bag, "Per-stage subsample fraction")
      ->capture_default_str();
  tune_cmd->add_option("--surrogates", tune_surrogates, "Max surrogate splits per node")
      ->capture_default_str();
  tune_cmd->add_flag("--baseline", tune_base.baseline, "Tune the plain boosted-tree baseline");
  tune_cmd->add_option("--out-report", tune_report, "Tuning report CSV")->capture_default_str();
  tune_cmd->add_option("--out-model", tune_model_out, "Best-model file")->capture_default_str();
  tune_cmd->add_option("--cores", tune_common.cores, "Parallel workers for (cell x fold) tasks")
      ->capture_default_str();
  add_common(tune_cmd, &tune_common);

  // ---- simulate ----------------------------------------------------------------
  CommonOpts sim_common;
  SimConfig sim_cfg;
  std::string sim_effect = "nonlinear", sim_prefix = "sim";
  int sim_p = -1;
  CLI::App* sim = app.add_subcommand("simulate", "Generate clustered train/test data + truth");
  sim->add_option("--n", sim_cfg.n, "Rows per set")->capture_default_str();
  sim->add_option("--P", sim_cfg.n_predictors, "Total predictors")->capture_default_str();
  sim->add_option("--p", sim_p, "Active predictors (default max(q, 25% of P))");
  sim->add_option("--q", sim_cfg.n_random, "Predictors with group-specific effects")
      ->capture_default_str();
  sim->add_option("--group-size", sim_cfg.group_size, "Average group size")
      ->capture_default_str();
  sim->add_option("--icc", sim_cfg.icc, "Intra-class correlation in (0,1)")
      ->capture_default_str();
  sim->add_option("--r2", sim_cfg.r2, "Target fixed-effect R2 in (0,1)")->capture_default_str();
  sim->add_option("--effect", sim_effect, "linear or nonlinear")->capture_default_str();
  sim->add_option("--out-prefix", sim_prefix, "Writes <prefix>_train/_test/_truth.csv")
      ->capture_default_str();
  add_common(sim, &sim_common);

  // ---- bench ------------------------------------------------------------------
  CommonOpts bench_common;
  std::string bench_conditions, bench_prefix = "bench";
  int bench_reps = 10;
  int bench_folds = 3;
  std::vector<double> met_shrinkage{0.025, 0.1};
  std::vector<int> met_depth{3, 5};
  int met_trees = 500;
  std::vector<double> base_shrinkage{0.01, 0.05};
  std::vector<int> base_depth{5, 10};
  int base_trees = 2000;
  std::vector<int> bench_min_node{20};
  CLI::App* bench = app.add_subcommand("bench", "metboost-vs-baseline comparison study");
  bench->add_option("--conditions", bench_conditions,
                    "Condition CSV: n,P,p,q,effect,group_size,icc,r2")
      ->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--reps", bench_reps, "Replications per condition")->capture_default_str();
  bench->add_option("--cv-folds", bench_folds, "CV folds for both methods")
      ->capture_default_str();
  bench->add_option("--met-shrinkage", met_shrinkage, "metboost step-size grid")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--met-depth", met_depth, "metboost depth grid")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--met-trees", met_trees, "metboost max stages")->capture_default_str();
  bench->add_option("--base-shrinkage", base_shrinkage, "baseline step-size grid")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--base-depth", base_depth, "baseline depth grid")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--base-trees", base_trees, "baseline max stages")->capture_default_str();
  bench->add_option("--min-node", bench_min_node, "Minimum node size grid (both methods)")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--out-prefix", bench_prefix, "Writes <prefix>_results/_summary.csv")
      ->capture_default_str();
  bench->add_option("--cores", bench_common.cores, "Parallel workers per tuning run")
      ->capture_default_str();
  add_common(bench, &bench_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (fit->parsed()) {
      apply_kernels(fit_common.kernels);
      const Dataset d = load_csv(fit_opts.data, fit_opts.outcome, fit_opts.id,
                                 fit_common.na_token);
      const BoostParams p = to_params(fit_opts, fit_common);
      const BoostModel model = fit_opts.baseline ? boost_baseline(d, p) : boost_metboost(d, p);
      save_model(model, fit_opts.out);
      print_fit_summary(model, d);
      std::cout << "model written to " << fit_opts.out << "\n";
    } else if (pred->parsed()) {
      apply_kernels(pred_common.kernels);
      const BoostModel model = load_model(pred_model);
      const CsvTable t = read_csv(pred_data);
      const PredictionFrame frame = build_frame(model, t, pred_common.na_token);
      const std::vector<double> yhat = predict(model, frame, pred_m);
      std::ofstream file;
      std::ostream* out = &std::cout;
      if (!pred_out.empty()) {
        file.open(pred_out, std::ios::binary);
        if (!file) throw std::runtime_error("io error: cannot write " + pred_out);
        out = &file;
      }
      *out << "yhat\n";
      for (double v : yhat) *out << format_double(v) << "\n";
    } else if (infl->parsed()) {
      apply_kernels(infl_common.kernels);
      const BoostModel model = load_model(infl_model);
      const InfluenceReport rep = relative_influence(model, infl_exclude);
      if (infl_out.empty()) {
        std::cout << "predictor,score\n";
        for (const auto& e : rep.entries) {
          std::cout << csv_quote(e.predictor) << ',' << format_double(e.score) << "\n";
        }
      } else {
        write_influence_csv(rep, infl_out);
      }
    } else if (marg->parsed()) {
      apply_kernels(marg_common.kernels);
      const BoostModel model = load_model(marg_model);
      const Dataset d = load_csv(marg_data, model.outcome_name, model.id_name,
                                 marg_common.na_token);
      const auto rows = marginal_effects(model, d, marg_pred, split_labels(marg_groups));
      if (marg_out.empty()) {
        std::cout << "group,x,yhat\n";
        for (const auto& r : rows) {
          std::cout << csv_quote(r.group) << ',' << format_double(r.x) << ','
                    << format_double(r.yhat) << "\n";
        }
      } else {
        write_margins_csv(rows, marg_out);
      }
    } else if (tune_cmd->parsed()) {
      apply_kernels(tune_common.kernels);
      const Dataset d = load_csv(tune_base.data, tune_base.outcome, tune_base.id,
                                 tune_common.na_token);
      TuneGrid grid;
      grid.shrinkage = tune_shrinkage;
      grid.depth = tune_depth;
      grid.min_node = tune_min_node;
      grid.n_trees = tune_trees;
      grid.folds = tune_folds;
      grid.bag_fraction = tune_bag;
      grid.max_surrogates = tune_surrogates;
      grid.seed = tune_common.seed;
      const Mode mode = tune_base.baseline ? Mode::baseline : Mode::metboost;
      const TuneResult res = cv_tune(d, grid, mode, tune_common.cores, &std::cerr);
      write_tune_report(res, tune_report);
      save_model(res.model, tune_model_out);
      const TuneCell& best = res.cells[static_cast<std::size_t>(res.best_cell)];
      std::cout << "best cell: shrinkage=" << best.shrinkage << " depth=" << best.depth
                << " min_node=" << best.min_node << " m=" << res.best_m
                << " cv_mse=" << res.best_mse << "\n"
                << "report written to " << tune_report << ", model to " << tune_model_out
                << "\n";
    } else if (sim->parsed()) {
      apply_kernels(sim_common.kernels);
      sim_cfg.effect = (sim_effect == "linear") ? EffectType::linear : EffectType::nonlinear;
      if (sim_effect != "linear" && sim_effect != "nonlinear") {
        throw std::runtime_error("parameter error: --effect must be linear or nonlinear");
      }
      sim_cfg.n_active = (sim_p > 0)
                             ? sim_p
                             : std::max(sim_cfg.n_random,
                                        static_cast<int>(std::lround(0.25 * sim_cfg.n_predictors)));
      sim_cfg.seed = sim_common.seed;
      const auto [train, test, truth] = gen_sim_data(sim_cfg);
      write_dataset_csv(train, sim_prefix + "_train.csv", sim_common.na_token);
      write_dataset_csv(test, sim_prefix + "_test.csv", sim_common.na_token);
      write_truth_csv(sim_cfg, truth, sim_prefix + "_truth.csv");
      std::cout << "wrote " << sim_prefix << "_train.csv, " << sim_prefix << "_test.csv, "
                << sim_prefix << "_truth.csv (g=" << sim_cfg.n_groups()
                << ", sigma2=" << format_double(truth.sigma2) << ")\n";
    } else if (bench->parsed()) {
      apply_kernels(bench_common.kernels);
      const std::vector<SimConfig> conditions = read_conditions_csv(bench_conditions);
      MethodSpec base{"gbm", Mode::baseline, {}};
      base.grid.shrinkage = base_shrinkage;
      base.grid.depth = base_depth;
      base.grid.min_node = bench_min_node;
      base.grid.n_trees = base_trees;
      base.grid.folds = bench_folds;
      MethodSpec met{"metboost", Mode::metboost, {}};
      met.grid.shrinkage = met_shrinkage;
      met.grid.depth = met_depth;
      met.grid.min_node = bench_min_node;
      met.grid.n_trees = met_trees;
      met.grid.folds = bench_folds;

      std::ofstream results(bench_prefix + "_results.csv", std::ios::binary);
      if (!results) {
        throw std::runtime_error("io error: cannot write " + bench_prefix + "_results.csv");
      }
      const auto summaries = run_benchmark(conditions, bench_reps, base, met,
                                           bench_common.seed, bench_common.cores, &results,
                                           &std::cerr);
      std::ofstream summary(bench_prefix + "_summary.csv", std::ios::binary);
      if (!summary) {
        throw std::runtime_error("io error: cannot write " + bench_prefix + "_summary.csv");
      }
      write_bench_summary(summaries, summary);
      write_bench_summary(summaries, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
