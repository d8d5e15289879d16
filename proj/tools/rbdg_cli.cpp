// Command-line driver: single runs, the three sweeps, and grid search.

#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rbdg/config.hpp"
#include "rbdg/error.hpp"
#include "rbdg/experiments.hpp"
#include "rbdg/solver.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 2;
constexpr int kSolverFailure = 3;
constexpr int kIoFailure = 4;
constexpr int kInterrupted = 130;

rbdg::StopFlag g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("rbdg");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("RBDG_LOG");
  const std::string level = env ? env : "warn";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::warn);
}

std::string matrix_csv(const rbdg::Matrix& m) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << rbdg::format_double(m(i, j));
    out << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw rbdg::IoError("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw rbdg::IoError("write failed for " + path.string());
}

void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw rbdg::IoError("cannot create output directory " + dir.string());
  }
}

int cmd_simulate(const rbdg::RunConfig& cfg, const std::filesystem::path& out) {
  using namespace rbdg;
  const Instance inst = make_instance(cfg.scenario, realization_seed(cfg.seed, 0, 0));
  const GroundTruth truth = normalize_ground_truth(inst.filter, inst.x);
  const Hyperparams& hp = cfg.hparams.at(cfg.method);

  Matrix g_est, x_est, s_est;
  std::vector<double> trace;
  std::vector<int> epochs;
  if (cfg.method == Method::rbdg || cfg.method == Method::rbdg_rew) {
    RunResult res = rbdg_run(inst.y, inst.s_bar, hp);
    g_est = res.g_hat;
    x_est = res.x_hat.entries;
    s_est = res.s_hat;
    trace = res.objective_trace;
    epochs = res.weight_epoch;
  } else {
    BaselineResult res = rbdh_run(inst.y, inst.s_bar, hp);
    const Matrix h_inv = res.h_hat.fullPivLu().inverse();
    const double tau = h_inv.trace();
    if (!std::isfinite(tau) || tau == 0.0) throw SolverError("forward filter estimate cannot be normalized");
    g_est = h_inv / tau;
    x_est = res.x_hat.entries / tau;
    s_est = res.s_hat;
    trace = res.objective_trace;
    epochs = res.weight_epoch;
  }

  prepare_out_dir(out);
  write_text(out / "G_hat.csv", matrix_csv(g_est));
  write_text(out / "X_hat.csv", matrix_csv(x_est));
  write_text(out / "S_hat.csv", matrix_csv(s_est));
  std::ostringstream tr;
  tr << "iteration,epoch,objective\n";
  for (std::size_t i = 0; i < trace.size(); ++i) tr << i + 1 << ',' << epochs[i] << ',' << format_double(trace[i]) << '\n';
  write_text(out / "objective_trace.csv", tr.str());

  std::cout << "err_G=" << format_double(normalized_error(truth.g_ref, g_est))
            << " err_X=" << format_double(normalized_error(truth.x_ref.entries, x_est))
            << " err_S=" << format_double(normalized_error(inst.s.matrix(), s_est)) << '\n';
  return kOk;
}

int cmd_experiment(const rbdg::RunConfig& cfg, int test_case, int parallelism, const std::filesystem::path& out) {
  using namespace rbdg;
  const TestCase tc = test_case == 1 ? TestCase::pert_sweep
                      : test_case == 2 ? TestCase::sparsity_sweep
                                       : TestCase::samples_sweep;
  const char* suffix = test_case == 1 ? "pert" : test_case == 2 ? "sparsity" : "samp";
  const ExperimentSpec spec = make_experiment(tc, cfg);
  prepare_out_dir(out);
  const SweepResult result = run_sweep(spec, parallelism, &g_stop);
  const std::pair<Metric, const char*> metrics[] = {{Metric::g, "G"}, {Metric::x, "X"}, {Metric::s, "S"}};
  for (const auto& [metric, name] : metrics) {
    const std::string base = std::string("err_") + name + "_" + suffix;
    emit_csv(result, metric, (out / (base + ".csv")).string());
    emit_quartiles_csv(result, metric, (out / (base + ".q.csv")).string());
  }
  std::ostringstream raw;
  raw << result.axis << ",raw_err_S_median\n";
  for (std::size_t p = 0; p < result.x_values.size(); ++p) {
    raw << format_double(result.x_values[p]) << ',' << format_double(quartiles(result.raw_s_error[p]).median) << '\n';
  }
  write_text(out / (std::string("err_S_observed_") + suffix + ".csv"), raw.str());
  return kOk;
}

int cmd_gridsearch(const rbdg::RunConfig& cfg, int parallelism, const std::filesystem::path& out) {
  using namespace rbdg;
  if (cfg.grid.axes.empty()) throw ConfigError("gridsearch needs a [grid] section");
  prepare_out_dir(out);
  const std::vector<Method> methods(std::begin(kAllMethods), std::end(kAllMethods));
  const GridSearchResult res = grid_search(cfg, methods, parallelism, (out / "grid_scores.csv").string(), &g_stop);
  RunConfig best = cfg;
  for (const auto& [m, hp] : res.best) best.hparams[m] = hp;
  write_text(out / "best_hparams.conf", format_config(best));
  return res.complete ? kOk : kInterrupted;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  std::signal(SIGINT, on_sigint);

  CLI::App app{"Blind deconvolution of graph signals under a perturbed graph"};
  std::string command;
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int parallelism = 1;
  int test_case = 1;
  std::vector<std::string> overrides;
  app.add_option("command", command, "simulate | experiment | gridsearch")
      ->required()
      ->check(CLI::IsMember({"simulate", "experiment", "gridsearch"}));
  app.add_option("--config", config_path, "Config file (key = value lines)");
  app.add_option("--out", out_dir, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed, overrides the config");
  app.add_option("--parallelism", parallelism, "Worker threads for sweeps")->check(CLI::Range(1, 256));
  app.add_option("--test-case", test_case, "Sweep for `experiment`: 1 pert, 2 sparsity, 3 samples")
      ->check(CLI::Range(1, 3));
  app.add_option("--override", overrides, "KEY=VALUE, KEY may be section.key; repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigFailure;
  }

  try {
    rbdg::ConfigText text = config_path.empty() ? rbdg::ConfigText{} : rbdg::read_config_text(config_path);
    for (const auto& o : overrides) rbdg::apply_override(text, o);
    rbdg::RunConfig cfg = rbdg::build_config(text);
    if (*seed_opt) cfg.seed = seed;

    const std::filesystem::path out(out_dir);
    if (command == "simulate") return cmd_simulate(cfg, out);
    if (command == "experiment") return cmd_experiment(cfg, test_case, parallelism, out);
    return cmd_gridsearch(cfg, parallelism, out);
  } catch (const rbdg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const rbdg::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const rbdg::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const rbdg::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const rbdg::GenerationError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const rbdg::Error& e) {
    if (g_stop.load()) {
      std::cerr << "interrupted\n";
      return kInterrupted;
    }
    std::cerr << "error: " << e.what() << '\n';
    return kSolverFailure;
  }
}
