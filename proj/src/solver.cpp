#include "rbdg/solver.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "rbdg/error.hpp"

namespace rbdg {

namespace {

double rel_change(double before, double after) {
  return (before - after) / std::max(std::abs(before), std::numeric_limits<double>::min());
}

double weighted_l1(const Matrix& m, const Matrix* w) {
  return w ? w->cwiseProduct(m.cwiseAbs()).sum() : m.cwiseAbs().sum();
}

// min ||Y - H X||^2 + gamma ||H S - S H||^2 over unconstrained H.
Matrix solve_h_subproblem(const Matrix& y, const Matrix& x, const Matrix& s, double gamma, bool& ridged) {
  const auto n = y.rows();
  const Matrix xxt = x * x.transpose();
  Matrix q = Matrix::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (xxt(i, j) != 0.0) q.block(i * n, j * n, n, n).diagonal().array() += xxt(i, j);
  if (gamma > 0.0) q += gamma * commutator_gram(s);

  Eigen::LLT<Matrix> llt(q);
  ridged = false;
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14) {
    ridged = true;
    q.diagonal().array() += 1e-10 * std::max(1.0, q.diagonal().mean());
    llt.compute(q);
    if (llt.info() != Eigen::Success) throw SolverError("forward filter normal equations are singular");
  }
  const Matrix rhs = y * x.transpose();
  Vector h = llt.solve(Eigen::Map<const Vector>(rhs.data(), rhs.size()));
  Matrix out = Eigen::Map<Matrix>(h.data(), n, n);
  if (!out.allFinite()) throw SolverError("non-finite forward filter estimate");
  return out;
}

// min ||Y - H X||^2 + alpha ||W o X||_1 by monotone FISTA from `x0`.
Matrix solve_x_lasso(const Matrix& y, const Matrix& h, const Matrix& x0, double alpha, const Matrix* w,
                     int max_iters, double tol) {
  const auto objective = [&](const Matrix& x) {
    return (y - h * x).squaredNorm() + alpha * weighted_l1(x, w);
  };
  const double spec = Eigen::JacobiSVD<Matrix>(h).singularValues()(0);
  const double lip = std::max(2.0 * spec * spec * 1.0001, 1e-12);
  const Matrix hth = h.transpose() * h;
  const Matrix hty = h.transpose() * y;

  Matrix x = x0;
  Matrix z = x0;
  double fx = objective(x);
  double t = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    const Matrix grad = 2.0 * (hth * z - hty);
    Matrix cand = soft_threshold(z - grad / lip, alpha / lip, w);
    const double residual = (cand - z).norm();
    const double fc = objective(cand);
    Matrix x_next = fc <= fx ? cand : x;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = x_next + (t / t_next) * (cand - x_next) + ((t - 1.0) / t_next) * (x_next - x);
    t = t_next;
    x = std::move(x_next);
    fx = std::min(fx, fc);
    if (!x.allFinite()) throw SolverError("source update diverged");
    if (residual <= tol * std::max(1.0, z.norm())) break;
  }
  return x;
}

Matrix solve_s_block(const Matrix& s0, const Matrix& filter, const Matrix& s_bar, const Hyperparams& hp,
                     const Matrix* weights_s) {
  if (hp.step2_method == Step2Method::coordinate) {
    return coordinate_descent_s(s0, filter, s_bar, hp.beta, hp.lambda, hp.gamma, weights_s, hp.s_step).s;
  }
  return prox_gradient_s(s0, filter, s_bar, hp.beta, hp.lambda, hp.gamma, weights_s, hp.s_step).s;
}

// Step 1 with X eliminated: phi(G) = sum huber_t(G Y) + gamma ||G S - S G||^2,
// huber_t(z) = min_x (z - x)^2 + 2t|x|, t = alpha * w / 2.
class ReducedStep1 {
 public:
  ReducedStep1(const Matrix& y, const Matrix& s, double alpha, double gamma, const Matrix* weights)
      : n_(y.rows()), y_(y), s_(s), gamma_(gamma) {
    thresh_ = weights ? Matrix(0.5 * alpha * *weights) : Matrix::Constant(y.rows(), y.cols(), 0.5 * alpha);
    if (gamma_ > 0.0) comm_hessian_ = 2.0 * gamma_ * commutator_gram(s_);
  }

  double value(const Matrix& g) const {
    const Matrix z = g * y_;
    double total = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double a = std::abs(z(i, j));
        const double t = thresh_(i, j);
        total += a <= t ? a * a : 2.0 * t * a - t * t;
      }
    return total + gamma_ * (g * s_ - s_ * g).squaredNorm();
  }

  Matrix gradient(const Matrix& g) const {
    const Matrix z = g * y_;
    const Matrix clipped = z.cwiseMin(thresh_).cwiseMax(-thresh_);
    Matrix grad = 2.0 * clipped * y_.transpose();
    if (gamma_ > 0.0) {
      const Matrix c = g * s_ - s_ * g;
      grad += 2.0 * gamma_ * (c * s_.transpose() - s_.transpose() * c);
    }
    return grad;
  }

  // Generalized Hessian: entries in the quadratic zone contribute 2 y_j y_j'
  // to the block of their row of G.
  Matrix hessian(const Matrix& g) const {
    Matrix h = gamma_ > 0.0 ? comm_hessian_ : Matrix::Zero(n_ * n_, n_ * n_);
    const Matrix z = g * y_;
    Matrix masked(y_.rows(), y_.cols());
    for (Eigen::Index k = 0; k < n_; ++k) {
      for (Eigen::Index j = 0; j < y_.cols(); ++j) {
        const double keep = std::abs(z(k, j)) < thresh_(k, j) ? 1.0 : 0.0;
        masked.col(j) = keep * y_.col(j);
      }
      const Matrix block = 2.0 * masked * y_.transpose();
      for (Eigen::Index i2 = 0; i2 < n_; ++i2)
        for (Eigen::Index i1 = 0; i1 < n_; ++i1) h(k + n_ * i1, k + n_ * i2) += block(i1, i2);
    }
    return h;
  }

  // -1, 0, +1 per entry of G Y: lower linear, quadratic, upper linear zone.
  std::vector<signed char> zones(const Matrix& g) const {
    const Matrix z = g * y_;
    std::vector<signed char> out(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double t = thresh_(i);
      out[static_cast<std::size_t>(i)] = z(i) > t ? 1 : (z(i) < -t ? -1 : 0);
    }
    return out;
  }

  Eigen::Index n() const { return n_; }

 private:
  Eigen::Index n_;
  const Matrix& y_;
  const Matrix& s_;
  double gamma_;
  Matrix thresh_;
  Matrix comm_hessian_;
};

// Newton direction restricted to Tr(D) = 0.
Matrix constrained_newton_direction(Matrix hess, const Matrix& grad) {
  const auto n = grad.rows();
  Vector t = Vector::Zero(n * n);
  for (Eigen::Index k = 0; k < n; ++k) t(k + n * k) = 1.0;
  if (!hess.allFinite() || !grad.allFinite()) throw SolverError("non-finite step 1 Newton system");
  const double scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
  Eigen::LLT<Matrix> llt(hess);
  for (double ridge = 1e-12 * scale; llt.info() != Eigen::Success || llt.rcond() < 1e-13; ridge *= 100.0) {
    if (ridge > scale) throw SolverError("step 1 Newton system is singular");
    hess.diagonal().array() += ridge;
    llt.compute(hess);
  }
  Vector d = -llt.solve(Eigen::Map<const Vector>(grad.data(), grad.size()));
  const Vector q = llt.solve(t);
  d -= (t.dot(d) / t.dot(q)) * q;
  return Eigen::Map<Matrix>(d.data(), n, n);
}

Step1Result step1_newton(const SignalMatrix& y, const Matrix& s_prev, const Hyperparams& hp,
                         const Matrix* weights_x, Matrix g) {
  const ReducedStep1 problem(y.entries, s_prev, hp.alpha, hp.gamma, weights_x);
  double phi = problem.value(g);
  auto zones = problem.zones(g);
  int rounds = 0;
  for (int it = 1; it <= hp.inner_iters; ++it) {
    rounds = it;
    const Matrix grad = problem.gradient(g);
    Matrix dir = constrained_newton_direction(problem.hessian(g), grad);
    // Rounding in the projected solve lets the trace drift; cancel it exactly.
    dir.diagonal().array() -= dir.trace() / static_cast<double>(dir.rows());
    const double slope = grad.cwiseProduct(dir).sum();
    if (!(slope < 0.0)) break;
    double step = 1.0;
    double next = problem.value(g + dir);
    while (next > phi + 1e-4 * step * slope && step > 1e-12) {
      step *= 0.5;
      next = problem.value(g + step * dir);
    }
    if (!(next <= phi)) break;
    g += step * dir;
    const double change = rel_change(phi, next);
    phi = next;
    // A full step that stays in the same piece lands on that piece's minimizer,
    // which is then the global one.
    auto next_zones = problem.zones(g);
    const bool same_piece = next_zones == zones;
    zones = std::move(next_zones);
    if (step == 1.0 && (same_piece || change < hp.inner_tol)) break;
  }
  if (!g.allFinite()) throw SolverError("non-finite filter estimate");
  Step1Result out;
  out.x = SignalMatrix{soft_threshold(g * y.entries, 0.5 * hp.alpha, weights_x), SignalRole::estimate};
  out.objective = step1_objective(g, out.x.entries, y.entries, s_prev, hp.alpha, hp.gamma, weights_x);
  out.g = std::move(g);
  out.rounds = rounds;
  return out;
}

}  // namespace

void Hyperparams::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0) || !(lambda >= 0.0)) {
    throw InvalidArgument("regularization weights must be nonnegative");
  }
  if (outer_iters < 1 || inner_iters < 1 || x_step_iters < 1 || s_step.max_iters < 1) {
    throw InvalidArgument("iteration budgets must be positive");
  }
  if (reweight && (!(reweight->epsilon > 0.0) || reweight->rounds < 0 || reweight->epoch_iters < 1)) {
    throw InvalidArgument("invalid reweighting settings");
  }
}

double step1_objective(const Matrix& g, const Matrix& x, const Matrix& y, const Matrix& s, double alpha,
                       double gamma, const Matrix* weights_x) {
  return (g * y - x).squaredNorm() + alpha * weighted_l1(x, weights_x) + gamma * (g * s - s * g).squaredNorm();
}

double joint_objective(const Matrix& g, const Matrix& x, const Matrix& s, const Matrix& y, const Matrix& s_bar,
                       const Hyperparams& hp, const Matrix* weights_x, const Matrix* weights_s) {
  return step1_objective(g, x, y, s, hp.alpha, hp.gamma, weights_x) + hp.beta * weighted_l1(s, weights_s) +
         hp.lambda * (s - s_bar).cwiseAbs().sum();
}

Step1Result step1_filter_source(const SignalMatrix& y, const Matrix& s_prev, const Hyperparams& hp,
                                const Matrix* weights_x, const std::optional<Matrix>& g0) {
  hp.validate();
  const auto n = y.nodes();
  if (s_prev.rows() != n || s_prev.cols() != n) throw InvalidArgument("GSO and observations do not conform");
  if (!y.entries.allFinite()) throw InvalidArgument("observations must be finite");

  Matrix start = g0 ? *g0 : Matrix(Matrix::Identity(n, n) / static_cast<double>(n));
  if (start.rows() != n || start.cols() != n) throw InvalidArgument("initial filter does not conform");
  if (hp.step1_method == Step1Method::newton) return step1_newton(y, s_prev, hp, weights_x, std::move(start));

  const GSubproblem sub(y.entries, s_prev, hp.gamma);
  const double shrink = 0.5 * hp.alpha;

  Step1Result out;
  out.g = std::move(start);
  out.x = SignalMatrix{soft_threshold(out.g * y.entries, shrink, weights_x), SignalRole::estimate};
  out.objective = step1_objective(out.g, out.x.entries, y.entries, s_prev, hp.alpha, hp.gamma, weights_x);
  for (int round = 1; round <= hp.inner_iters; ++round) {
    out.g = sub.solve(out.x.entries);
    out.x.entries = soft_threshold(out.g * y.entries, shrink, weights_x);
    const double f = step1_objective(out.g, out.x.entries, y.entries, s_prev, hp.alpha, hp.gamma, weights_x);
    const double change = rel_change(out.objective, f);
    out.objective = f;
    out.rounds = round;
    if (change < hp.inner_tol) break;
  }
  return out;
}

Matrix step2_graph_denoise(const Matrix& g, const Gso& s_bar, const Hyperparams& hp, const Matrix* weights_s,
                           const std::optional<Matrix>& s_warm) {
  hp.validate();
  const Matrix& start = s_warm ? *s_warm : s_bar.matrix();
  return solve_s_block(start, g, s_bar.matrix(), hp, weights_s);
}

RunResult rbdg_run(const SignalMatrix& y, const Gso& s_bar, const Hyperparams& hp) {
  hp.validate();
  if (y.nodes() != s_bar.size()) throw InvalidArgument("GSO and observations do not conform");
  if (!y.entries.allFinite()) throw InvalidArgument("observations must be finite");

  RunResult res;
  Matrix s = s_bar.matrix();
  std::optional<Matrix> g;
  std::optional<Matrix> weights_x;
  std::optional<Matrix> weights_s;
  int epoch = 0;
  int epoch_len = 0;
  int refreshes = 0;

  for (int t = 1; t <= hp.outer_iters; ++t) {
    try {
      const Matrix* wx = weights_x ? &*weights_x : nullptr;
      const Matrix* ws = weights_s ? &*weights_s : nullptr;
      Step1Result step1 = step1_filter_source(y, s, hp, wx, g);
      s = step2_graph_denoise(step1.g, s_bar, hp, ws, s);
      g = std::move(step1.g);
      res.x_hat = std::move(step1.x);

      const double f = joint_objective(*g, res.x_hat.entries, s, y.entries, s_bar.matrix(), hp, wx, ws);
      const bool same_epoch = !res.weight_epoch.empty() && res.weight_epoch.back() == epoch;
      const double change = same_epoch ? rel_change(res.objective_trace.back(), f) : 1.0;
      res.objective_trace.push_back(f);
      res.weight_epoch.push_back(epoch);
      res.iterations_used = t;
      spdlog::debug("rbdg outer {} objective {:.12e} inner rounds {}", t, f, step1.rounds);

      const bool settled = same_epoch && change < hp.outer_tol;
      ++epoch_len;
      if (hp.reweight && refreshes < hp.reweight->rounds && (settled || epoch_len >= hp.reweight->epoch_iters)) {
        ReweightState state{Matrix(), hp.reweight->epsilon, hp.reweight->rounds};
        // Scaled by epsilon so zero entries keep unit weight across epochs.
        weights_x = state.epsilon * update_reweights(res.x_hat.entries, state).weights;
        weights_s = state.epsilon * update_reweights(s, state).weights;
        ++refreshes;
        ++epoch;
        epoch_len = 0;
        continue;
      }
      if (settled) {
        res.converged = true;
        break;
      }
    } catch (const SolverError& e) {
      throw SolverError(e.what(), t);
    } catch (const InvalidArgument& e) {
      throw SolverError(e.what(), t);
    }
  }
  res.g_hat = std::move(*g);
  res.s_hat = std::move(s);
  return res;
}

BaselineResult rbdh_run(const SignalMatrix& y, const Gso& s_bar, const Hyperparams& hp) {
  hp.validate();
  const auto n = y.nodes();
  if (n != s_bar.size()) throw InvalidArgument("GSO and observations do not conform");
  if (!y.entries.allFinite()) throw InvalidArgument("observations must be finite");

  BaselineResult res;
  Matrix s = s_bar.matrix();
  Matrix h = Matrix::Identity(n, n);
  Matrix x = y.entries;
  std::optional<Matrix> weights_x;
  std::optional<Matrix> weights_s;
  int epoch = 0;
  int epoch_len = 0;
  int refreshes = 0;

  const auto objective = [&](const Matrix* wx, const Matrix* ws) {
    return (y.entries - h * x).squaredNorm() + hp.alpha * weighted_l1(x, wx) + hp.beta * weighted_l1(s, ws) +
           hp.lambda * (s - s_bar.matrix()).cwiseAbs().sum() + hp.gamma * (h * s - s * h).squaredNorm();
  };

  for (int t = 1; t <= hp.outer_iters; ++t) {
    try {
      const Matrix* wx = weights_x ? &*weights_x : nullptr;
      const Matrix* ws = weights_s ? &*weights_s : nullptr;
      bool ridged = false;
      h = solve_h_subproblem(y.entries, x, s, hp.gamma, ridged);
      if (ridged) {
        ++res.rank_deficient_solves;
        spdlog::debug("rbdh outer {}: forward filter normal equations rank deficient", t);
      }
      x = solve_x_lasso(y.entries, h, x, hp.alpha, wx, hp.x_step_iters, hp.s_step.tolerance);
      s = solve_s_block(s, h, s_bar.matrix(), hp, ws);

      const double f = objective(wx, ws);
      const bool same_epoch = !res.weight_epoch.empty() && res.weight_epoch.back() == epoch;
      const double change = same_epoch ? rel_change(res.objective_trace.back(), f) : 1.0;
      res.objective_trace.push_back(f);
      res.weight_epoch.push_back(epoch);
      res.iterations_used = t;

      const bool settled = same_epoch && change < hp.outer_tol;
      ++epoch_len;
      if (hp.reweight && refreshes < hp.reweight->rounds && (settled || epoch_len >= hp.reweight->epoch_iters)) {
        ReweightState state{Matrix(), hp.reweight->epsilon, hp.reweight->rounds};
        // Scaled by epsilon so zero entries keep unit weight across epochs.
        weights_x = state.epsilon * update_reweights(x, state).weights;
        weights_s = state.epsilon * update_reweights(s, state).weights;
        ++refreshes;
        ++epoch;
        epoch_len = 0;
        continue;
      }
      if (settled) {
        res.converged = true;
        break;
      }
    } catch (const SolverError& e) {
      throw SolverError(e.what(), t);
    } catch (const InvalidArgument& e) {
      throw SolverError(e.what(), t);
    }
  }
  res.h_hat = std::move(h);
  res.x_hat = SignalMatrix{std::move(x), SignalRole::estimate};
  res.s_hat = std::move(s);
  return res;
}

GroundTruth normalize_ground_truth(const FilterPair& filter, const SignalMatrix& x, double trace_floor) {
  if (!(std::abs(filter.trace_scale) >= trace_floor)) {
    throw InvalidArgument("inverse filter trace below floor");
  }
  return {filter.inverse / filter.trace_scale,
          SignalMatrix{x.entries / filter.trace_scale, SignalRole::sources}};
}

}  // namespace rbdg
