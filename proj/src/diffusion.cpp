#include "rbdg/diffusion.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "rbdg/error.hpp"
#include "rbdg/random.hpp"

namespace rbdg {

SignalMatrix generate_sources(int n, int m, const GenerationConfig& cfg) {
  if (n < 1 || m < 1) throw InvalidArgument("source matrix needs positive dimensions");
  if (cfg.k_sparsity < 1 || cfg.k_sparsity > n) throw InvalidArgument("sparsity K must lie in [1, n]");
  if (!(cfg.noise_power >= 0.0)) throw InvalidArgument("noise power must be nonnegative");

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SignalMatrix x{Matrix::Zero(n, m), SignalRole::sources};
  std::vector<int> nodes(static_cast<std::size_t>(n));
  for (int col = 0; col < m; ++col) {
    std::iota(nodes.begin(), nodes.end(), 0);
    for (int k = 0; k < cfg.k_sparsity; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(nodes[k], nodes[pick(rng)]);
      double v = normal(rng);
      while (v == 0.0) v = normal(rng);
      x.entries(nodes[k], col) = v;
    }
  }
  return x;
}

SignalMatrix diffuse(const FilterPair& filter, const SignalMatrix& x, double noise_power,
                     std::uint64_t seed) {
  if (filter.forward.cols() != x.nodes()) throw InvalidArgument("filter and signals do not conform");
  if (!(noise_power >= 0.0)) throw InvalidArgument("noise power must be nonnegative");

  SignalMatrix y{filter.forward * x.entries, SignalRole::observations};
  if (noise_power > 0.0) {
    const double sigma = std::sqrt(noise_power * y.entries.squaredNorm() /
                                   static_cast<double>(y.entries.size()));
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    for (Eigen::Index j = 0; j < y.entries.cols(); ++j)
      for (Eigen::Index i = 0; i < y.entries.rows(); ++i) y.entries(i, j) += normal(rng);
  }
  return y;
}

}  // namespace rbdg
