#include "rbdg/graph_model.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "rbdg/error.hpp"
#include "rbdg/random.hpp"

namespace rbdg {

namespace {

using Pair = std::pair<int, int>;

// Partial Fisher-Yates: the first `count` entries become a uniform sample.
template <class T>
void partial_shuffle(std::vector<T>& items, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

}  // namespace

Gso Gso::from_matrix(Matrix entries) {
  if (entries.rows() != entries.cols() || entries.rows() == 0) {
    throw InvalidArgument("GSO must be a non-empty square matrix");
  }
  const auto n = entries.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (entries(j, j) != 0.0) throw InvalidArgument("GSO must be hollow");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = entries(i, j);
      if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("GSO entries must be finite and nonnegative");
      if (v != entries(j, i)) throw InvalidArgument("GSO must be symmetric");
    }
  }
  return Gso(std::move(entries));
}

int Gso::edge_count() const {
  int count = 0;
  for (Eigen::Index j = 0; j < size(); ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (entries_(i, j) != 0.0) ++count;
  return count;
}

bool Gso::is_connected() const {
  const auto n = size();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<Eigen::Index> frontier;
  frontier.push(0);
  seen[0] = 1;
  Eigen::Index reached = 1;
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop();
    for (Eigen::Index v = 0; v < n; ++v) {
      if (entries_(u, v) != 0.0 && !seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n;
}

Gso generate_small_world(int n, int mean_degree, double rewire_prob, std::uint64_t seed,
                         int max_attempts) {
  if (n < 3) throw InvalidArgument("small-world graph needs n >= 3");
  if (mean_degree <= 0 || mean_degree >= n || mean_degree % 2 != 0) {
    throw InvalidArgument("mean_degree must be even and in (0, n)");
  }
  if (!(rewire_prob >= 0.0 && rewire_prob <= 1.0)) throw InvalidArgument("rewire_prob must lie in [0, 1]");

  const int half = mean_degree / 2;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> node(0, n - 1);

    Matrix adj = Matrix::Zero(n, n);
    for (int u = 0; u < n; ++u) {
      for (int j = 1; j <= half; ++j) {
        const int v = (u + j) % n;
        adj(u, v) = adj(v, u) = 1.0;
      }
    }
    // Rewire lattice edges (u, u+j) one offset ring at a time.
    for (int j = 1; j <= half; ++j) {
      for (int u = 0; u < n; ++u) {
        if (coin(rng) >= rewire_prob) continue;
        const int v = (u + j) % n;
        if (adj(u, v) == 0.0) continue;
        if (adj.row(u).sum() >= n - 1) continue;
        int w = node(rng);
        while (w == u || adj(u, w) != 0.0) w = node(rng);
        adj(u, v) = adj(v, u) = 0.0;
        adj(u, w) = adj(w, u) = 1.0;
      }
    }
    Gso g = Gso::from_matrix(std::move(adj));
    if (g.is_connected()) return g;
  }
  throw GenerationError("no connected small-world graph after " + std::to_string(max_attempts) +
                        " attempts");
}

Gso perturb_rewire(const Gso& s, const PerturbationSpec& spec) {
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) throw InvalidArgument("perturbation ratio must lie in [0, 1]");
  const auto n = static_cast<int>(s.size());
  std::vector<Pair> edges;
  std::vector<Pair> absent;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < j; ++i) {
      (s.matrix()(i, j) != 0.0 ? edges : absent).emplace_back(i, j);
    }
  }
  if (edges.empty()) throw InvalidArgument("cannot rewire an empty graph");
  const auto count = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(edges.size())));
  if (count == 0) return s;
  if (absent.size() < count) throw InvalidArgument("graph too dense to add " + std::to_string(count) + " links");

  Rng rng(spec.seed);
  partial_shuffle(edges, count, rng);
  partial_shuffle(absent, count, rng);

  Matrix out = s.matrix();
  for (std::size_t k = 0; k < count; ++k) {
    const auto [i, j] = edges[k];
    out(i, j) = out(j, i) = 0.0;
  }
  for (std::size_t k = 0; k < count; ++k) {
    const auto [i, j] = absent[k];
    out(i, j) = out(j, i) = 1.0;
  }
  return Gso::from_matrix(std::move(out));
}

Matrix evaluate_polynomial(const Matrix& s, const Vector& coeffs) {
  const auto n = s.rows();
  Matrix h = Matrix::Zero(n, n);
  for (Eigen::Index r = coeffs.size() - 1; r >= 0; --r) {
    h = h * s;
    h.diagonal().array() += coeffs(r);
  }
  return h;
}

double spectral_radius(const Gso& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s.matrix(), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

FilterPair make_filter(const Gso& s, Vector coeffs, double basis_scale) {
  if (coeffs.size() < 1 || coeffs.size() > s.size()) {
    throw InvalidArgument("filter needs between 1 and N coefficients");
  }
  if (!(basis_scale > 0.0) || !std::isfinite(basis_scale)) throw InvalidArgument("basis scale must be positive");
  FilterPair f;
  f.basis_scale = basis_scale;
  f.forward = evaluate_polynomial(basis_scale * s.matrix(), coeffs);
  Eigen::FullPivLU<Matrix> lu(f.forward);
  if (!lu.isInvertible()) throw InvalidArgument("graph filter is singular");
  f.inverse = lu.inverse();
  f.trace_scale = f.inverse.trace();
  f.coeffs = std::move(coeffs);
  return f;
}

FilterPair synthesize_filter(const Gso& s, int order, std::uint64_t seed, const FilterLimits& limits) {
  if (order < 1 || order > s.size()) throw InvalidArgument("filter order must lie in [1, N]");
  if (!(limits.cond_limit > 1.0)) throw InvalidArgument("cond_limit must exceed 1");

  double scale = 1.0;
  if (limits.basis == FilterBasis::spectral_normalized) {
    const double rho = spectral_radius(s);
    if (rho > 0.0) scale = 1.0 / rho;
  }
  const Matrix basis = scale * s.matrix();

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0; attempt < limits.max_attempts; ++attempt) {
    Vector h(order);
    for (int r = 0; r < order; ++r) h(r) = unif(rng);
    const Matrix forward = evaluate_polynomial(basis, h);
    Eigen::JacobiSVD<Matrix> svd(forward);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0) || sv(0) / smin > limits.cond_limit) continue;
    FilterPair f = make_filter(s, std::move(h), scale);
    if (std::abs(f.trace_scale) < limits.trace_floor) continue;
    return f;
  }
  throw GenerationError("no well-conditioned filter after " + std::to_string(limits.max_attempts) +
                        " attempts");
}

Matrix commutator(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    throw InvalidArgument("commutator needs square matrices of equal size");
  }
  return a * b - b * a;
}

}  // namespace rbdg
