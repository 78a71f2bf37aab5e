#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "metboost/data.hpp"
#include "metboost/tune.hpp"

namespace metboost {

enum class EffectType { linear, nonlinear };

// Element-wise transform bank for nonlinear effects: f0..f4.
double sim_transform(int id, double x);

struct SimConfig {
  int n = 1000;
  int n_predictors = 25;   // P
  int n_active = 6;        // p, nonzero fixed effects
  int n_random = 5;        // q <= p, group-specific slopes
  EffectType effect = EffectType::nonlinear;
  int group_size = 4;      // average; g = round(n / group_size)
  double icc = 0.5;
  double r2 = 0.5;
  std::uint64_t seed = 0;

  int n_groups() const;
  void validate() const;
};

struct SimTruth {
  std::vector<int> active;     // sorted predictor indices with nonzero beta
  std::vector<int> transform;  // per active predictor; all 0 in linear mode
  double beta = 0.0;
  double sigma2 = 0.0;
  std::vector<double> b;       // g x q slope weights, group-major
};

// y = X* beta + Z b + e with Z the first q transformed active columns times
// the group indicators; sigma2 = (1 - ICC) / ICC; beta calibrated for the
// target R~2. Test set: same groups and b, fresh X and e, same size.
std::tuple<Dataset, Dataset, SimTruth> gen_sim_data(const SimConfig& cfg);

// beta = sqrt(r2 * random_plus_noise_var / ((1 - r2) * fixed_sum_var)); the
// fixed_sum_var argument is the sample variance of the summed active columns
// (approximately p for independent unit-variance predictors).
double calibrate_beta(double r2, double random_plus_noise_var, double fixed_sum_var);

// Mann-Whitney AUC: probability a random active predictor outscores a random
// inactive one, ties counted half.
double auc_variable_selection(std::span<const double> scores,
                              std::span<const std::uint8_t> active);

struct MethodSpec {
  std::string label;
  Mode mode = Mode::metboost;
  TuneGrid grid;
};

struct BenchRow {
  int condition = 0;
  int rep = 0;
  std::string method;
  double mspe = 0.0;
  double auc = 0.0;
};

struct BenchSummary {
  int condition = 0;
  double mean_mspe_improvement = 0.0;  // 100*(mspe_a - mspe_b)/mspe_a, b over a
  double mean_auc_improvement = 0.0;   // 100*(auc_b - auc_a)/auc_a
  int reps = 0;
  int mspe_wins = 0;  // reps where method b had lower MSPE
  int auc_wins = 0;
};

// Per condition x rep: generate data, tune and fit both methods, score test
// MSPE and variable-selection AUC. Results are flushed row by row.
std::vector<BenchSummary> run_benchmark(std::span<const SimConfig> conditions, int reps,
                                        const MethodSpec& method_a, const MethodSpec& method_b,
                                        std::uint64_t seed, int cores, std::ostream* results_csv,
                                        std::ostream* progress = nullptr);

void write_bench_summary(std::span<const BenchSummary> summaries, std::ostream& out);

// Condition file: CSV with columns n,P,p,q,effect,group_size,icc,r2.
std::vector<SimConfig> read_conditions_csv(const std::string& path);

void write_truth_csv(const SimConfig& cfg, const SimTruth& truth, const std::string& path);

}  // namespace metboost
