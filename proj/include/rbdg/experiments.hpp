#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbdg/config.hpp"
#include "rbdg/graph_model.hpp"

namespace rbdg {

enum class TestCase { pert_sweep, sparsity_sweep, samples_sweep, custom };

/// CSV header name of the swept quantity: Eps, S, M, or `custom_axis`.
std::string axis_name(TestCase tc, const std::string& custom_axis = "pert_ratio");

struct ExperimentSpec {
  TestCase test_case = TestCase::pert_sweep;
  /// Scenario key swept by TestCase::custom.
  std::string custom_axis = "pert_ratio";
  std::vector<double> sweep_values;
  int n_realizations = 25;
  Scenario base;
  std::vector<Method> methods;
  std::map<Method, Hyperparams> hparams;
  std::uint64_t master_seed = 42;

  void validate() const;
};

/// The paper's three sweeps over the base scenario of `cfg`.
ExperimentSpec make_experiment(TestCase tc, const RunConfig& cfg);

struct ErrorTriple {
  double g = 0.0;
  double x = 0.0;
  double s = 0.0;
};

struct Instance {
  Gso s;
  Gso s_bar;
  FilterPair filter;
  SignalMatrix x;
  SignalMatrix y;
};

/// Frobenius relative error; throws InvalidArgument on zero-norm truth or shape mismatch.
double normalized_error(const Matrix& truth, const Matrix& estimate);

/// Scenario with the swept key set to `value`.
Scenario scenario_at(const ExperimentSpec& spec, double value);

/// One (S, H, X, Y, S_bar) draw, fully determined by `seed`.
Instance make_instance(const Scenario& sc, std::uint64_t seed);

/// Seed of realization `r` at sweep point `point`; shared by every method.
std::uint64_t realization_seed(std::uint64_t master, std::size_t point, std::size_t r);

/// Generates the instance, runs `method`, and compares against the
/// unit-trace ground truth. Solver errors propagate as SolverError.
ErrorTriple run_realization(std::uint64_t seed, const ExperimentSpec& spec, Method method, double sweep_value);

/// ||S_bar - S||_F / ||S||_F of the instance behind `seed`.
double raw_observation_error(std::uint64_t seed, const ExperimentSpec& spec, double sweep_value);

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

/// Linear-interpolated quartiles of the finite entries; NaN when there are none.
Quartiles quartiles(std::vector<double> values);

struct MethodSweep {
  /// [point][realization], nullopt where the solver failed.
  std::vector<std::vector<std::optional<ErrorTriple>>> raw;
  std::vector<ErrorTriple> median;
  std::vector<int> failures;
  /// More than 20% of realizations failed at that point.
  std::vector<bool> flagged;
};

struct SweepResult {
  TestCase test_case = TestCase::pert_sweep;
  std::string axis;
  std::vector<double> x_values;
  std::vector<Method> methods;
  std::map<Method, MethodSweep> per_method;
  /// [point][realization] error of the observed GSO itself.
  std::vector<std::vector<double>> raw_s_error;
};

/// Cooperative cancellation; workers stop taking new tasks once it is set.
using StopFlag = std::atomic<bool>;

/// Runs every (point, method, realization) task over `parallelism` workers.
/// Results land in index order, so the outcome does not depend on scheduling.
/// Throws Error("interrupted") if `stop` fires before all tasks finish.
SweepResult run_sweep(const ExperimentSpec& spec, int parallelism = 1, const StopFlag* stop = nullptr);

enum class Metric { g, x, s };

/// Median table for one metric: axis column then one column per method.
void emit_csv(const SweepResult& result, Metric metric, const std::string& path);
/// Quartile sidecar with q1, median, q3 per method.
void emit_quartiles_csv(const SweepResult& result, Metric metric, const std::string& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

struct GridRow {
  Method method;
  Hyperparams hp;
  ErrorTriple median;
  int failures = 0;
};

struct GridSearchResult {
  std::map<Method, Hyperparams> best;
  std::vector<GridRow> rows;
  bool complete = true;
};

/// Exhaustive search over the Cartesian product of `cfg.grid.axes` for each
/// method, scored on `cfg.grid.realizations` draws of the base scenario.
/// Picks the smallest median err_G, breaking ties by median err_X. Every row
/// is appended to `score_path` as soon as it is scored; an interrupted search
/// ends the file with a "# partial" line.
GridSearchResult grid_search(const RunConfig& cfg, const std::vector<Method>& methods, int parallelism,
                             const std::string& score_path, const StopFlag* stop = nullptr);

}  // namespace rbdg
