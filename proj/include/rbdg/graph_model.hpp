#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace rbdg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Graph shift operator in the adjacency role.
///
/// Always symmetric, hollow and entrywise nonnegative; construction through
/// `from_matrix` checks all three.
class Gso {
 public:
  static Gso from_matrix(Matrix entries);

  Eigen::Index size() const noexcept { return entries_.rows(); }
  const Matrix& matrix() const noexcept { return entries_; }
  /// Number of nonzero entries in the strict upper triangle.
  int edge_count() const;
  bool is_connected() const;

 private:
  explicit Gso(Matrix entries) : entries_(std::move(entries)) {}
  Matrix entries_;
};

enum class PerturbationKind { rewire };

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::rewire;
  double ratio = 0.1;
  std::uint64_t seed = 0;
};

/// Polynomial graph filter H = sum_r h_r (c S)^r together with its inverse,
/// where c = `basis_scale` (1 for the raw GSO powers).
struct FilterPair {
  Vector coeffs;
  double basis_scale = 1.0;
  Matrix forward;
  /// H^{-1}, not normalized.
  Matrix inverse;
  /// Tr(H^{-1}); dividing `inverse` by it yields the unit-trace inverse.
  double trace_scale = 1.0;

  Matrix normalized_inverse() const { return inverse / trace_scale; }
};

enum class FilterBasis {
  /// Powers of S itself.
  raw,
  /// Powers of S / rho(S), rho the spectral radius.
  spectral_normalized,
};

struct FilterLimits {
  FilterBasis basis = FilterBasis::spectral_normalized;
  double cond_limit = 1e4;
  double trace_floor = 1e-3;
  int max_attempts = 1000;
};

/// Watts-Strogatz small-world graph, resampled until connected.
Gso generate_small_world(int n, int mean_degree, double rewire_prob, std::uint64_t seed,
                         int max_attempts = 100);

/// Deletes round(ratio * E) existing edges and adds as many absent pairs.
Gso perturb_rewire(const Gso& s, const PerturbationSpec& spec);

/// Evaluates sum_r coeffs[r] * S^r by Horner's rule.
Matrix evaluate_polynomial(const Matrix& s, const Vector& coeffs);

/// Builds the filter pair for explicit coefficients. Throws if H is singular.
FilterPair make_filter(const Gso& s, Vector coeffs, double basis_scale = 1.0);

double spectral_radius(const Gso& s);

/// Samples `order` coefficients uniformly on [0, 1] until H is well conditioned.
FilterPair synthesize_filter(const Gso& s, int order, std::uint64_t seed,
                             const FilterLimits& limits = {});

Matrix commutator(const Matrix& a, const Matrix& b);

}  // namespace rbdg
