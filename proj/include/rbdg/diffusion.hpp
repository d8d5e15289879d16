#pragma once

#include <cstdint>

#include "rbdg/graph_model.hpp"

namespace rbdg {

enum class SignalRole { sources, observations, estimate };

/// N x M matrix of stacked graph signals, one signal per column.
struct SignalMatrix {
  Matrix entries;
  SignalRole role = SignalRole::estimate;

  Eigen::Index nodes() const noexcept { return entries.rows(); }
  Eigen::Index signals() const noexcept { return entries.cols(); }
};

struct GenerationConfig {
  int k_sparsity = 2;
  /// E||W||_F^2 / ||HX||_F^2.
  double noise_power = 0.0;
  std::uint64_t seed = 0;
};

/// Each column gets exactly K standard-normal nonzeros on a uniformly drawn support.
SignalMatrix generate_sources(int n, int m, const GenerationConfig& cfg);

/// Y = H X + W.
SignalMatrix diffuse(const FilterPair& filter, const SignalMatrix& x, double noise_power,
                     std::uint64_t seed);

}  // namespace rbdg
