#include "rbdg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rbdg/error.hpp"

namespace rbdg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view text, std::string_view key, int line) {
  const auto s = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(s) + "'", line);
  }
  return v;
}

long long to_integer(std::string_view text, std::string_view key, int line) {
  const auto s = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + std::string(key) + "' expects an integer, got '" + std::string(s) + "'", line);
  }
  return v;
}

int to_int(std::string_view text, std::string_view key, int line) {
  const long long v = to_integer(text, key, line);
  if (v < -2147483647LL || v > 2147483647LL) throw ConfigError("'" + std::string(key) + "' out of range", line);
  return static_cast<int>(v);
}

std::vector<double> to_list(std::string_view text, std::string_view key, int line) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    out.push_back(to_double(item, key, line));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void set_scenario(Scenario& sc, std::string_view key, std::string_view value, int line) {
  if (key == "n") sc.n = to_int(value, key, line);
  else if (key == "m") sc.m = to_int(value, key, line);
  else if (key == "k") sc.k = to_int(value, key, line);
  else if (key == "mean_degree") sc.mean_degree = to_int(value, key, line);
  else if (key == "rewire_prob") sc.rewire_prob = to_double(value, key, line);
  else if (key == "filter_order") sc.filter_order = to_int(value, key, line);
  else if (key == "cond_limit") sc.cond_limit = to_double(value, key, line);
  else if (key == "noise_power") sc.noise_power = to_double(value, key, line);
  else if (key == "pert_ratio") sc.pert_ratio = to_double(value, key, line);
  else throw ConfigError("unknown key '" + std::string(key) + "'", line);
}

constexpr int kFormatVersion = 1;

const char* const kGridKeys[] = {"alpha", "beta", "gamma", "lambda", "reweight_epsilon"};

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::rbdg_rew: return "RBD-G-rew";
    case Method::rbdg: return "RBD-G";
    case Method::rbdh_rew: return "RBD-H-rew";
    case Method::rbdh: return "RBD-H";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (method_name(m) == name) return m;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

bool uses_reweighting(Method m) { return m == Method::rbdg_rew || m == Method::rbdh_rew; }

void Scenario::validate() const {
  if (n < 3) throw ConfigError("n must be at least 3");
  if (m < 1) throw ConfigError("m must be positive");
  if (k < 1 || k > n) throw ConfigError("k must lie in [1, n]");
  if (mean_degree <= 0 || mean_degree >= n || mean_degree % 2 != 0) {
    throw ConfigError("mean_degree must be even and in (0, n)");
  }
  if (!(rewire_prob >= 0.0 && rewire_prob <= 1.0)) throw ConfigError("rewire_prob must lie in [0, 1]");
  if (filter_order < 1 || filter_order > n) throw ConfigError("filter_order must lie in [1, n]");
  if (!(cond_limit > 1.0)) throw ConfigError("cond_limit must exceed 1");
  if (!(noise_power >= 0.0)) throw ConfigError("noise_power must be nonnegative");
  if (!(pert_ratio >= 0.0 && pert_ratio <= 1.0)) throw ConfigError("pert_ratio must lie in [0, 1]");
}

ConfigText parse_config_text(std::string_view text) {
  ConfigText out;
  out.sections[""];
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError("malformed section header", line_no);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError("empty section name", line_no);
      out.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key", line_no);
    if (value.empty()) throw ConfigError("missing value for '" + std::string(key) + "'", line_no);
    auto& sec = out.sections[section];
    if (sec.count(std::string(key))) throw ConfigError("duplicate key '" + std::string(key) + "'", line_no);
    sec[std::string(key)] = {std::string(value), line_no};
  }
  return out;
}

ConfigText read_config_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read config " + path);
  try {
    return parse_config_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply_override(ConfigText& text, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not KEY=VALUE");
  auto key = trim(assignment.substr(0, eq));
  const auto value = trim(assignment.substr(eq + 1));
  if (key.empty() || value.empty()) throw ConfigError("override '" + std::string(assignment) + "' is not KEY=VALUE");
  std::string section;
  // Method names contain dashes but no dots, so the last dot splits section from key.
  if (const auto dot = key.rfind('.'); dot != std::string_view::npos) {
    section = std::string(key.substr(0, dot));
    key = key.substr(dot + 1);
  }
  text.sections[section][std::string(key)] = {std::string(value), 0};
}

Hyperparams default_hparams(Method m) {
  Hyperparams hp;
  hp.alpha = 1e-6;
  hp.beta = 1e-9;
  hp.gamma = 1e-3;
  hp.lambda = 1e-8;
  hp.outer_iters = 300;
  hp.outer_tol = 1e-7;
  hp.inner_iters = 10;
  hp.inner_tol = 1e-10;
  hp.s_step.max_iters = 300;
  hp.s_step.tolerance = 1e-10;
  if (uses_reweighting(m)) hp.reweight = ReweightSettings{};
  return hp;
}

void set_hparam(Hyperparams& hp, std::string_view key, std::string_view value, int line) {
  const auto reweight = [&]() -> ReweightSettings& {
    if (!hp.reweight) throw ConfigError("'" + std::string(key) + "' applies only to reweighted methods", line);
    return *hp.reweight;
  };
  if (key == "alpha") hp.alpha = to_double(value, key, line);
  else if (key == "beta") hp.beta = to_double(value, key, line);
  else if (key == "gamma") hp.gamma = to_double(value, key, line);
  else if (key == "lambda") hp.lambda = to_double(value, key, line);
  else if (key == "outer_iters") hp.outer_iters = to_int(value, key, line);
  else if (key == "outer_tol") hp.outer_tol = to_double(value, key, line);
  else if (key == "inner_iters") hp.inner_iters = to_int(value, key, line);
  else if (key == "inner_tol") hp.inner_tol = to_double(value, key, line);
  else if (key == "s_iters") hp.s_step.max_iters = to_int(value, key, line);
  else if (key == "s_tol") hp.s_step.tolerance = to_double(value, key, line);
  else if (key == "x_iters") hp.x_step_iters = to_int(value, key, line);
  else if (key == "step1") {
    if (value == "newton") hp.step1_method = Step1Method::newton;
    else if (value == "block_descent") hp.step1_method = Step1Method::block_descent;
    else throw ConfigError("step1 must be newton or block_descent", line);
  } else if (key == "step2") {
    if (value == "coordinate") hp.step2_method = Step2Method::coordinate;
    else if (value == "prox_gradient") hp.step2_method = Step2Method::prox_gradient;
    else throw ConfigError("step2 must be coordinate or prox_gradient", line);
  } else if (key == "reweight_epsilon") reweight().epsilon = to_double(value, key, line);
  else if (key == "reweight_rounds") reweight().rounds = to_int(value, key, line);
  else if (key == "reweight_epoch_iters") reweight().epoch_iters = to_int(value, key, line);
  else throw ConfigError("unknown key '" + std::string(key) + "'", line);
}

RunConfig build_config(const ConfigText& text) {
  RunConfig cfg;
  for (Method m : kAllMethods) cfg.hparams[m] = default_hparams(m);

  for (const auto& [section, entries] : text.sections) {
    if (section.empty()) {
      for (const auto& [key, e] : entries) {
        if (key == "format") {
          if (to_int(e.value, key, e.line) != kFormatVersion) throw ConfigError("unsupported config format", e.line);
        } else if (key == "seed") {
          const long long v = to_integer(e.value, key, e.line);
          if (v < 0) throw ConfigError("seed must be nonnegative", e.line);
          cfg.seed = static_cast<std::uint64_t>(v);
        } else if (key == "realizations") {
          cfg.realizations = to_int(e.value, key, e.line);
        } else if (key == "method") {
          try {
            cfg.method = parse_method(e.value);
          } catch (const InvalidArgument& err) {
            throw ConfigError(err.what(), e.line);
          }
        } else {
          set_scenario(cfg.scenario, key, e.value, e.line);
        }
      }
    } else if (section == "grid") {
      for (const auto& [key, e] : entries) {
        if (key == "realizations") {
          cfg.grid.realizations = to_int(e.value, key, e.line);
          continue;
        }
        bool known = false;
        for (const char* k : kGridKeys) known = known || key == k;
        if (!known) throw ConfigError("unknown grid axis '" + key + "'", e.line);
        auto values = to_list(e.value, key, e.line);
        for (double v : values)
          if (!(v >= 0.0)) throw ConfigError("grid values must be nonnegative", e.line);
        cfg.grid.axes[key] = std::move(values);
      }
    } else {
      Method m;
      try {
        m = parse_method(section);
      } catch (const InvalidArgument&) {
        const int line = entries.empty() ? 0 : entries.begin()->second.line;
        throw ConfigError("unknown section '" + section + "'", line);
      }
      for (const auto& [key, e] : entries) set_hparam(cfg.hparams[m], key, e.value, e.line);
    }
  }

  cfg.scenario.validate();
  if (cfg.realizations < 1) throw ConfigError("realizations must be positive");
  if (cfg.grid.realizations < 1) throw ConfigError("grid realizations must be positive");
  for (auto& [m, hp] : cfg.hparams) {
    try {
      hp.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string(method_name(m)) + ": " + e.what());
    }
  }
  return cfg;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvalidArgument("cannot format number");
  return std::string(buf, ptr);
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream out;
  const auto& sc = cfg.scenario;
  out << "format = " << kFormatVersion << "\n";
  out << "seed = " << cfg.seed << "\n"
      << "realizations = " << cfg.realizations << "\n"
      << "method = " << method_name(cfg.method) << "\n"
      << "n = " << sc.n << "\n"
      << "m = " << sc.m << "\n"
      << "k = " << sc.k << "\n"
      << "mean_degree = " << sc.mean_degree << "\n"
      << "rewire_prob = " << format_double(sc.rewire_prob) << "\n"
      << "filter_order = " << sc.filter_order << "\n"
      << "cond_limit = " << format_double(sc.cond_limit) << "\n"
      << "noise_power = " << format_double(sc.noise_power) << "\n"
      << "pert_ratio = " << format_double(sc.pert_ratio) << "\n";
  for (const auto& [m, hp] : cfg.hparams) {
    out << "\n[" << method_name(m) << "]\n"
        << "alpha = " << format_double(hp.alpha) << "\n"
        << "beta = " << format_double(hp.beta) << "\n"
        << "gamma = " << format_double(hp.gamma) << "\n"
        << "lambda = " << format_double(hp.lambda) << "\n"
        << "outer_iters = " << hp.outer_iters << "\n"
        << "outer_tol = " << format_double(hp.outer_tol) << "\n"
        << "step1 = " << (hp.step1_method == Step1Method::newton ? "newton" : "block_descent") << "\n"
        << "inner_iters = " << hp.inner_iters << "\n"
        << "inner_tol = " << format_double(hp.inner_tol) << "\n"
        << "step2 = " << (hp.step2_method == Step2Method::coordinate ? "coordinate" : "prox_gradient") << "\n"
        << "s_iters = " << hp.s_step.max_iters << "\n"
        << "s_tol = " << format_double(hp.s_step.tolerance) << "\n"
        << "x_iters = " << hp.x_step_iters << "\n";
    if (hp.reweight) {
      out << "reweight_epsilon = " << format_double(hp.reweight->epsilon) << "\n"
          << "reweight_rounds = " << hp.reweight->rounds << "\n"
          << "reweight_epoch_iters = " << hp.reweight->epoch_iters << "\n";
    }
  }
  if (!cfg.grid.axes.empty()) {
    out << "\n[grid]\nrealizations = " << cfg.grid.realizations << "\n";
    for (const auto& [key, values] : cfg.grid.axes) {
      out << key << " = ";
      for (std::size_t i = 0; i < values.size(); ++i) out << (i ? ", " : "") << format_double(values[i]);
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace rbdg
