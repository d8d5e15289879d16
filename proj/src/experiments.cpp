#include "rbdg/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "rbdg/diffusion.hpp"
#include "rbdg/error.hpp"
#include "rbdg/random.hpp"
#include "rbdg/solver.hpp"

namespace rbdg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double pick(const ErrorTriple& e, Metric m) {
  switch (m) {
    case Metric::g: return e.g;
    case Metric::x: return e.x;
    case Metric::s: return e.s;
  }
  return kNaN;
}

std::vector<double> finite_values(const std::vector<std::optional<ErrorTriple>>& raw, Metric m) {
  std::vector<double> out;
  for (const auto& e : raw)
    if (e && std::isfinite(pick(*e, m))) out.push_back(pick(*e, m));
  return out;
}

// Runs task(i) for i in [0, count) on up to `parallelism` threads.
void parallel_for(std::size_t count, int parallelism, const StopFlag* stop,
                  const std::function<void(std::size_t)>& task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (;;) {
      if (stop && stop->load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp(parallelism, 1, 256));
  if (threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

std::string format_cell(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

std::string format_sweep_value(const SweepResult& r, std::size_t i) { return format_double(r.x_values[i]); }

std::vector<double> axes_or(const GridSpec& grid, const char* key, double fallback) {
  const auto it = grid.axes.find(key);
  if (it == grid.axes.end() || it->second.empty()) return {fallback};
  return it->second;
}

}  // namespace

std::string axis_name(TestCase tc, const std::string& custom_axis) {
  switch (tc) {
    case TestCase::pert_sweep: return "Eps";
    case TestCase::sparsity_sweep: return "S";
    case TestCase::samples_sweep: return "M";
    case TestCase::custom: return custom_axis;
  }
  return custom_axis;
}

void ExperimentSpec::validate() const {
  if (sweep_values.empty()) throw InvalidArgument("sweep values must be nonempty");
  if (!std::is_sorted(sweep_values.begin(), sweep_values.end())) throw InvalidArgument("sweep values must be sorted");
  if (n_realizations < 1) throw InvalidArgument("at least one realization is required");
  if (methods.empty()) throw InvalidArgument("at least one method is required");
  for (Method m : methods)
    if (!hparams.count(m)) throw InvalidArgument("missing hyperparameters for " + std::string(method_name(m)));
  for (double v : sweep_values) {
    try {
      scenario_at(*this, v).validate();
    } catch (const ConfigError& e) {
      throw InvalidArgument(std::string("sweep value ") + format_double(v) + ": " + e.what());
    }
  }
}

ExperimentSpec make_experiment(TestCase tc, const RunConfig& cfg) {
  ExperimentSpec spec;
  spec.test_case = tc;
  spec.n_realizations = cfg.realizations;
  spec.base = cfg.scenario;
  spec.methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
  spec.hparams = cfg.hparams;
  spec.master_seed = cfg.seed;
  switch (tc) {
    case TestCase::pert_sweep: spec.sweep_values = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25}; break;
    case TestCase::sparsity_sweep: spec.sweep_values = {2, 3, 4, 5, 6}; break;
    case TestCase::samples_sweep: spec.sweep_values = {15, 30, 50, 100}; break;
    case TestCase::custom: throw InvalidArgument("custom sweeps need explicit values");
  }
  return spec;
}

double normalized_error(const Matrix& truth, const Matrix& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw InvalidArgument("truth and estimate differ in shape");
  }
  const double denom = truth.norm();
  if (!(denom > 0.0)) throw InvalidArgument("zero-norm truth");
  return (truth - estimate).norm() / denom;
}

Scenario scenario_at(const ExperimentSpec& spec, double value) {
  Scenario sc = spec.base;
  const auto as_int = [&](const char* what) {
    if (value != std::round(value)) throw InvalidArgument(std::string(what) + " sweep needs integer values");
    return static_cast<int>(value);
  };
  switch (spec.test_case) {
    case TestCase::pert_sweep: sc.pert_ratio = value; break;
    case TestCase::sparsity_sweep: sc.k = as_int("sparsity"); break;
    case TestCase::samples_sweep: sc.m = as_int("samples"); break;
    case TestCase::custom:
      if (spec.custom_axis == "pert_ratio") sc.pert_ratio = value;
      else if (spec.custom_axis == "noise_power") sc.noise_power = value;
      else if (spec.custom_axis == "k") sc.k = as_int("k");
      else if (spec.custom_axis == "m") sc.m = as_int("m");
      else throw InvalidArgument("cannot sweep '" + spec.custom_axis + "'");
      break;
  }
  return sc;
}

std::uint64_t realization_seed(std::uint64_t master, std::size_t point, std::size_t r) {
  return derive_seed(master, {static_cast<std::uint64_t>(point), static_cast<std::uint64_t>(r)});
}

Instance make_instance(const Scenario& sc, std::uint64_t seed) {
  sc.validate();
  Gso s = generate_small_world(sc.n, sc.mean_degree, sc.rewire_prob, derive_seed(seed, {1}));
  FilterLimits limits;
  limits.cond_limit = sc.cond_limit;
  FilterPair filter = synthesize_filter(s, sc.filter_order, derive_seed(seed, {2}), limits);
  SignalMatrix x = generate_sources(sc.n, sc.m, {sc.k, 0.0, derive_seed(seed, {3})});
  SignalMatrix y = diffuse(filter, x, sc.noise_power, derive_seed(seed, {5}));
  Gso s_bar = perturb_rewire(s, {PerturbationKind::rewire, sc.pert_ratio, derive_seed(seed, {4})});
  return {std::move(s), std::move(s_bar), std::move(filter), std::move(x), std::move(y)};
}

ErrorTriple run_realization(std::uint64_t seed, const ExperimentSpec& spec, Method method, double sweep_value) {
  const Instance inst = make_instance(scenario_at(spec, sweep_value), seed);
  const GroundTruth truth = normalize_ground_truth(inst.filter, inst.x);
  const Hyperparams& hp = spec.hparams.at(method);

  Matrix g_est;
  Matrix x_est;
  Matrix s_est;
  if (method == Method::rbdg || method == Method::rbdg_rew) {
    RunResult res = rbdg_run(inst.y, inst.s_bar, hp);
    g_est = std::move(res.g_hat);
    x_est = std::move(res.x_hat.entries);
    s_est = std::move(res.s_hat);
  } else {
    BaselineResult res = rbdh_run(inst.y, inst.s_bar, hp);
    Eigen::FullPivLU<Matrix> lu(res.h_hat);
    if (!lu.isInvertible()) throw SolverError("forward filter estimate is singular");
    const Matrix h_inv = lu.inverse();
    const double tau = h_inv.trace();
    if (!(std::abs(tau) > 0.0) || !std::isfinite(tau)) throw SolverError("forward filter inverse has zero trace");
    g_est = h_inv / tau;
    x_est = res.x_hat.entries / tau;
    s_est = std::move(res.s_hat);
  }
  return {normalized_error(truth.g_ref, g_est), normalized_error(truth.x_ref.entries, x_est),
          normalized_error(inst.s.matrix(), s_est)};
}

double raw_observation_error(std::uint64_t seed, const ExperimentSpec& spec, double sweep_value) {
  const Instance inst = make_instance(scenario_at(spec, sweep_value), seed);
  return normalized_error(inst.s.matrix(), inst.s_bar.matrix());
}

Quartiles quartiles(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return {kNaN, kNaN, kNaN};
  std::sort(values.begin(), values.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

SweepResult run_sweep(const ExperimentSpec& spec, int parallelism, const StopFlag* stop) {
  spec.validate();
  const std::size_t points = spec.sweep_values.size();
  const std::size_t methods = spec.methods.size();
  const auto reps = static_cast<std::size_t>(spec.n_realizations);

  SweepResult out;
  out.test_case = spec.test_case;
  out.axis = axis_name(spec.test_case, spec.custom_axis);
  out.x_values = spec.sweep_values;
  out.methods = spec.methods;
  out.raw_s_error.assign(points, std::vector<double>(reps, kNaN));

  // Flat index-ordered buffer: [point][method][realization].
  std::vector<std::optional<ErrorTriple>> buffer(points * methods * reps);
  parallel_for(points * methods * reps, parallelism, stop, [&](std::size_t i) {
    const std::size_t r = i % reps;
    const std::size_t mi = (i / reps) % methods;
    const std::size_t p = i / (reps * methods);
    const Method method = spec.methods[mi];
    const std::uint64_t seed = realization_seed(spec.master_seed, p, r);
    try {
      buffer[i] = run_realization(seed, spec, method, spec.sweep_values[p]);
    } catch (const SolverError& e) {
      spdlog::info("{} at {}={} realization {}: {}", method_name(method), out.axis,
                   format_double(spec.sweep_values[p]), r, e.what());
    } catch (const GenerationError& e) {
      spdlog::info("instance generation failed at {}={} realization {}: {}", out.axis,
                   format_double(spec.sweep_values[p]), r, e.what());
    }
    if (mi == 0) {
      try {
        out.raw_s_error[p][r] = raw_observation_error(seed, spec, spec.sweep_values[p]);
      } catch (const GenerationError&) {
      }
    }
  });
  if (stop && stop->load()) throw Error("interrupted");

  for (std::size_t mi = 0; mi < methods; ++mi) {
    MethodSweep ms;
    for (std::size_t p = 0; p < points; ++p) {
      const auto first = buffer.begin() + static_cast<std::ptrdiff_t>((p * methods + mi) * reps);
      std::vector<std::optional<ErrorTriple>> raw(first, first + static_cast<std::ptrdiff_t>(reps));
      const int failed = static_cast<int>(std::count(raw.begin(), raw.end(), std::nullopt));
      ms.median.push_back({quartiles(finite_values(raw, Metric::g)).median,
                           quartiles(finite_values(raw, Metric::x)).median,
                           quartiles(finite_values(raw, Metric::s)).median});
      ms.failures.push_back(failed);
      ms.flagged.push_back(failed * 5 > static_cast<int>(reps));
      if (failed > 0) {
        spdlog::warn("{} at {}={}: {} of {} realizations failed and are excluded from the median{}",
                     method_name(spec.methods[mi]), out.axis, format_double(spec.sweep_values[p]), failed, reps,
                     ms.flagged.back() ? " (flagged)" : "");
      }
      ms.raw.push_back(std::move(raw));
    }
    out.per_method[spec.methods[mi]] = std::move(ms);
  }
  return out;
}

void emit_csv(const SweepResult& result, Metric metric, const std::string& path) {
  std::ostringstream out;
  out << result.axis;
  for (Method m : result.methods) out << ',' << method_name(m);
  out << '\n';
  for (std::size_t p = 0; p < result.x_values.size(); ++p) {
    out << format_sweep_value(result, p);
    for (Method m : result.methods) out << ',' << format_cell(pick(result.per_method.at(m).median[p], metric));
    out << '\n';
  }
  write_file(path, out.str());
}

void emit_quartiles_csv(const SweepResult& result, Metric metric, const std::string& path) {
  std::ostringstream out;
  out << result.axis;
  for (Method m : result.methods) {
    const auto name = method_name(m);
    out << ',' << name << "_q1," << name << "_median," << name << "_q3";
  }
  out << '\n';
  for (std::size_t p = 0; p < result.x_values.size(); ++p) {
    out << format_sweep_value(result, p);
    for (Method m : result.methods) {
      const Quartiles q = quartiles(finite_values(result.per_method.at(m).raw[p], metric));
      out << ',' << format_cell(q.q1) << ',' << format_cell(q.median) << ',' << format_cell(q.q3);
    }
    out << '\n';
  }
  write_file(path, out.str());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header) {
      table.header = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != table.header.size()) throw InvalidArgument("ragged CSV row: " + line);
    std::vector<double> row;
    for (const auto& c : cells) {
      if (c == "nan") {
        row.push_back(kNaN);
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        throw InvalidArgument("non-numeric CSV cell '" + c + "'");
      }
      if (used != c.size()) throw InvalidArgument("non-numeric CSV cell '" + c + "'");
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

GridSearchResult grid_search(const RunConfig& cfg, const std::vector<Method>& methods, int parallelism,
                             const std::string& score_path, const StopFlag* stop) {
  if (methods.empty()) throw InvalidArgument("grid search needs at least one method");
  std::ofstream score(score_path, std::ios::binary | std::ios::trunc);
  if (!score) throw IoError("cannot open " + score_path + " for writing");
  score << "method,alpha,beta,gamma,lambda,reweight_epsilon,median_err_G,median_err_X,median_err_S,failures\n";
  score.flush();

  GridSearchResult result;
  for (Method method : methods) {
    const Hyperparams base = cfg.hparams.at(method);
    const auto alphas = axes_or(cfg.grid, "alpha", base.alpha);
    const auto betas = axes_or(cfg.grid, "beta", base.beta);
    const auto gammas = axes_or(cfg.grid, "gamma", base.gamma);
    const auto lambdas = axes_or(cfg.grid, "lambda", base.lambda);
    const auto epsilons = axes_or(cfg.grid, "reweight_epsilon", base.reweight ? base.reweight->epsilon : 0.0);
    const auto& eps_axis = base.reweight ? epsilons : std::vector<double>{0.0};

    std::vector<Hyperparams> candidates;
    for (double a : alphas)
      for (double b : betas)
        for (double g : gammas)
          for (double l : lambdas)
            for (double e : eps_axis) {
              Hyperparams hp = base;
              hp.alpha = a;
              hp.beta = b;
              hp.gamma = g;
              hp.lambda = l;
              if (hp.reweight) hp.reweight->epsilon = e;
              candidates.push_back(hp);
            }

    ExperimentSpec spec;
    spec.test_case = TestCase::pert_sweep;
    spec.sweep_values = {cfg.scenario.pert_ratio};
    spec.n_realizations = cfg.grid.realizations;
    spec.base = cfg.scenario;
    spec.methods = {method};
    spec.master_seed = derive_seed(cfg.seed, {0x6772696400ULL});

    std::optional<std::size_t> best;
    for (const Hyperparams& hp : candidates) {
      if (stop && stop->load()) break;
      spec.hparams[method] = hp;
      SweepResult sweep;
      try {
        sweep = run_sweep(spec, parallelism, stop);
      } catch (const Error&) {
        if (stop && stop->load()) break;
        throw;
      }
      const MethodSweep& ms = sweep.per_method.at(method);
      GridRow row{method, hp, ms.median.front(), ms.failures.front()};
      score << method_name(method) << ',' << format_double(hp.alpha) << ',' << format_double(hp.beta) << ','
            << format_double(hp.gamma) << ',' << format_double(hp.lambda) << ','
            << format_double(hp.reweight ? hp.reweight->epsilon : 0.0) << ',' << format_cell(row.median.g) << ','
            << format_cell(row.median.x) << ',' << format_cell(row.median.s) << ',' << row.failures << '\n';
      score.flush();
      if (!score) throw IoError("write failed for " + score_path);

      // Points with too many failures never win.
      const bool usable = !ms.flagged.front() && std::isfinite(row.median.g);
      result.rows.push_back(row);
      if (usable) {
        const bool better = !best || row.median.g < result.rows[*best].median.g ||
                            (row.median.g == result.rows[*best].median.g && row.median.x < result.rows[*best].median.x);
        if (better) best = result.rows.size() - 1;
      }
    }
    if (stop && stop->load()) {
      result.complete = false;
      if (best) result.best[method] = result.rows[*best].hp;
      break;
    }
    result.best[method] = best ? result.rows[*best].hp : base;
    if (!best) spdlog::warn("{}: every grid point failed; keeping the configured hyperparameters", method_name(method));
  }
  if (!result.complete) {
    score << "# partial\n";
    score.flush();
  }
  return result;
}

}  // namespace rbdg
