#pragma once

#include <optional>
#include <vector>

#include "rbdg/diffusion.hpp"
#include "rbdg/graph_model.hpp"
#include "rbdg/prox.hpp"

namespace rbdg {

struct ReweightSettings {
  double epsilon = 1e-2;
  /// Number of weight refreshes.
  int rounds = 2;
  /// Weights are refreshed when an epoch converges or after this many outer
  /// iterations within it, whichever comes first.
  int epoch_iters = 50;
};

enum class Step1Method {
  /// Alternate the closed-form X update with the exact KKT G update.
  block_descent,
  /// Eliminate X = soft(G Y) and run active-set Newton on the resulting
  /// piecewise-quadratic problem in G, restricted to Tr(G) = 1.
  newton,
};

enum class Step2Method {
  prox_gradient,
  /// Exact cyclic coordinate minimization; needs a symmetric hollow S.
  coordinate,
};

struct Hyperparams {
  double alpha = 0.0;   // l1 on X
  double beta = 0.0;    // l1 on S
  double gamma = 0.0;   // commutativity
  double lambda = 0.0;  // l1 on S - S_bar

  int outer_iters = 20;
  double outer_tol = 1e-6;
  Step1Method step1_method = Step1Method::newton;
  int inner_iters = 50;
  double inner_tol = 1e-8;
  Step2Method step2_method = Step2Method::coordinate;
  ProxGradientOptions s_step{};
  /// Iteration budget for the X-update of the forward-filter baseline.
  int x_step_iters = 500;

  std::optional<ReweightSettings> reweight;

  void validate() const;
};

struct RunResult {
  Matrix g_hat;
  SignalMatrix x_hat;
  Matrix s_hat;
  /// Full objective after each outer iteration, with the weights in effect then.
  std::vector<double> objective_trace;
  /// Index of the reweighting epoch each trace entry belongs to.
  std::vector<int> weight_epoch;
  int iterations_used = 0;
  bool converged = false;
};

/// Forward-filter baseline result; same layout with H in place of G.
struct BaselineResult {
  Matrix h_hat;
  SignalMatrix x_hat;
  Matrix s_hat;
  std::vector<double> objective_trace;
  std::vector<int> weight_epoch;
  int iterations_used = 0;
  bool converged = false;
  /// H normal equations that needed a ridge term.
  int rank_deficient_solves = 0;
};

struct Step1Result {
  Matrix g;
  SignalMatrix x;
  double objective = 0.0;
  int rounds = 0;
};

/// ||G Y - X||^2 + alpha ||W o X||_1 + gamma ||G S - S G||^2
double step1_objective(const Matrix& g, const Matrix& x, const Matrix& y, const Matrix& s, double alpha,
                       double gamma, const Matrix* weights_x);

/// The relaxed joint objective over (G, X, S).
double joint_objective(const Matrix& g, const Matrix& x, const Matrix& s, const Matrix& y, const Matrix& s_bar,
                       const Hyperparams& hp, const Matrix* weights_x, const Matrix* weights_s);

/// Exact block descent over X (soft threshold) and G (KKT solve) with S fixed.
/// Starts from `g0`, or I/N when absent.
Step1Result step1_filter_source(const SignalMatrix& y, const Matrix& s_prev, const Hyperparams& hp,
                                const Matrix* weights_x = nullptr, const std::optional<Matrix>& g0 = {});

/// Graph denoising with G fixed, warm-started at `s_warm` (S_bar when absent).
Matrix step2_graph_denoise(const Matrix& g, const Gso& s_bar, const Hyperparams& hp,
                           const Matrix* weights_s = nullptr, const std::optional<Matrix>& s_warm = {});

/// Alternating minimization over (G, X) and S, initialized at S = S_bar.
RunResult rbdg_run(const SignalMatrix& y, const Gso& s_bar, const Hyperparams& hp);

/// Three-block baseline on ||Y - H X||^2 with the same regularizers.
BaselineResult rbdh_run(const SignalMatrix& y, const Gso& s_bar, const Hyperparams& hp);

struct GroundTruth {
  Matrix g_ref;
  SignalMatrix x_ref;
};

/// Unit-trace inverse filter and the sources rescaled to match it.
GroundTruth normalize_ground_truth(const FilterPair& filter, const SignalMatrix& x, double trace_floor = 1e-3);

}  // namespace rbdg
