#pragma once

#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "rbdg/graph_model.hpp"

namespace rbdg {

/// Entrywise sign(v) * max(|v| - t*w, 0); `weights` defaults to all ones.
Matrix soft_threshold(const Matrix& v, double t, const Matrix* weights = nullptr);
double soft_threshold(double v, double t);

/// argmin_s a|s| + b|s - anchor| + (s - v)^2 / 2
double double_l1_prox(double v, double a, double b, double anchor);
/// Entrywise version with per-entry weights on `a` (nullptr for ones).
Matrix double_l1_prox(const Matrix& v, double a, const Matrix* weights, double b, const Matrix& anchor);

struct ReweightState {
  Matrix weights;
  double epsilon = 1e-3;
  int rounds = 3;
};

/// weights_ij = 1 / (|current_ij| + epsilon)
ReweightState update_reweights(const Matrix& current, const ReweightState& state);

/// Exact minimizer of ||G Y - X||_F^2 + gamma ||G S - S G||_F^2 s.t. Tr(G) = 1.
///
/// The quadratic block of the KKT system depends only on (Y, S, gamma), so it
/// is factored once and reused for every right-hand side X. The trace
/// multiplier is eliminated by a Schur complement on the single constraint row.
class GSubproblem {
 public:
  GSubproblem(const Matrix& y, const Matrix& s, double gamma);

  Matrix solve(const Matrix& x) const;
  /// Ridge added to the quadratic block, 0 unless the first factorization failed.
  double ridge() const noexcept { return ridge_; }

 private:
  Eigen::Index n_;
  Matrix y_;
  Eigen::LLT<Matrix> llt_;
  Vector q_inv_trace_;  // Q^{-1} vec(I)
  double trace_gain_ = 0.0;  // vec(I)' Q^{-1} vec(I)
  double ridge_ = 0.0;
};

Matrix solve_g_subproblem(const Matrix& y, const Matrix& x, const Matrix& s, double gamma);

/// Hessian/2 of vec(G) -> ||G S - S G||_F^2: S S'(x)I - S(x)S - S'(x)S' + I(x)S'S.
Matrix commutator_gram(const Matrix& s);

struct ProxGradientOptions {
  int max_iters = 3000;
  double tolerance = 1e-12;
  bool project_hollow_symmetric = true;
  bool accelerate = true;
  bool record_trace = false;
};

struct ProxGradientResult {
  Matrix s;
  double objective = 0.0;
  int iterations = 0;
  /// Objective after every iteration (only with record_trace).
  std::vector<double> trace;
};

/// beta ||W o S||_1 + lambda ||S - S_bar||_1 + gamma ||G S - S G||_F^2
double graph_denoise_objective(const Matrix& s, const Matrix& g, const Matrix& s_bar, double beta,
                               double lambda, double gamma, const Matrix* weights_s);

/// Proximal gradient (monotone FISTA when `accelerate`) on the graph-denoising problem.
ProxGradientResult prox_gradient_s(const Matrix& s0, const Matrix& g, const Matrix& s_bar, double beta,
                                   double lambda, double gamma, const Matrix* weights_s,
                                   const ProxGradientOptions& opts = {});

/// Same problem by cyclic exact minimization over the upper-triangle pairs of a
/// symmetric hollow S. `max_iters` counts sweeps; stops once no coordinate
/// moves by more than tolerance * max(1, max|S|).
ProxGradientResult coordinate_descent_s(const Matrix& s0, const Matrix& g, const Matrix& s_bar, double beta,
                                        double lambda, double gamma, const Matrix* weights_s,
                                        const ProxGradientOptions& opts = {});

}  // namespace rbdg
