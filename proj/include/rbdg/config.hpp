#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rbdg/solver.hpp"

namespace rbdg {

enum class Method { rbdg_rew, rbdg, rbdh_rew, rbdh };

inline constexpr Method kAllMethods[] = {Method::rbdg_rew, Method::rbdg, Method::rbdh_rew, Method::rbdh};

std::string_view method_name(Method m);
/// Accepts the display names (RBD-G-rew, ...); throws InvalidArgument otherwise.
Method parse_method(std::string_view name);
bool uses_reweighting(Method m);

/// Instance generator settings shared by every command.
struct Scenario {
  int n = 20;
  int m = 50;
  int k = 2;
  int mean_degree = 4;
  double rewire_prob = 0.2;
  int filter_order = 3;
  double cond_limit = 1e4;
  double noise_power = 0.0;
  double pert_ratio = 0.1;

  void validate() const;
};

/// Hyperparameter axes for grid search; an empty axis keeps the method's value.
struct GridSpec {
  std::map<std::string, std::vector<double>> axes;
  int realizations = 5;
};

struct RunConfig {
  Scenario scenario;
  std::uint64_t seed = 42;
  int realizations = 25;
  /// Method used by single runs.
  Method method = Method::rbdg_rew;
  std::map<Method, Hyperparams> hparams;
  GridSpec grid;
};

/// Raw `key = value` entries grouped by `[section]`; the top level is section "".
struct ConfigText {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections;
};

/// Throws ConfigError carrying the line number on malformed input.
ConfigText parse_config_text(std::string_view text);
/// Throws IoError if the file cannot be read, ConfigError if it is malformed.
ConfigText read_config_text(const std::string& path);

/// Applies `KEY=VALUE` (KEY is `key` or `section.key`). Unknown keys are
/// rejected once the text is interpreted by `build_config`.
void apply_override(ConfigText& text, std::string_view assignment);

/// Defaults overlaid with `text`; every key must be known.
RunConfig build_config(const ConfigText& text);

/// Defaults for a method before any config is applied.
Hyperparams default_hparams(Method m);

/// Sets one hyperparameter by its config key; throws ConfigError for unknown keys.
void set_hparam(Hyperparams& hp, std::string_view key, std::string_view value, int line = 0);

/// Writes the full configuration in the format read by `parse_config_text`.
std::string format_config(const RunConfig& cfg);

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

}  // namespace rbdg
