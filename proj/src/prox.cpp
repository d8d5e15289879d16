#include "rbdg/prox.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "rbdg/error.hpp"
#include "rbdg/kernels.hpp"
#include "rbdg/random.hpp"

namespace rbdg {

namespace {

std::span<const double> view(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument(what);
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw SolverError(what);
}

// Kronecker product accumulated into `out`: out += scale * (A (x) B).
void add_kron(Matrix& out, const Matrix& a, const Matrix& b, double scale) {
  const auto n = b.rows();
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double aij = scale * a(i, j);
      if (aij != 0.0) out.block(i * n, j * n, n, n) += aij * b;
    }
}

void symmetrize_hollow(Matrix& m) {
  m = 0.5 * (m + m.transpose()).eval();
  m.diagonal().setZero();
}

}  // namespace

Matrix soft_threshold(const Matrix& v, double t, const Matrix* weights) {
  if (!(t >= 0.0)) throw InvalidArgument("threshold must be nonnegative");
  if (weights) require_same_shape(v, *weights, "weights must match the thresholded matrix");
  Matrix out(v.rows(), v.cols());
  kernels::soft_threshold(view(v), t, weights ? view(*weights) : std::span<const double>{}, view(out));
  return out;
}

double soft_threshold(double v, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("threshold must be nonnegative");
  return std::copysign(std::max(std::abs(v) - t, 0.0), v);
}

double double_l1_prox(double v, double a, double b, double anchor) {
  if (!(a >= 0.0) || !(b >= 0.0)) throw InvalidArgument("prox weights must be nonnegative");
  double out = 0.0;
  kernels::table(kernels::active_isa()).double_l1_prox(&v, a, nullptr, b, &anchor, &out, 1);
  return out;
}

Matrix double_l1_prox(const Matrix& v, double a, const Matrix* weights, double b, const Matrix& anchor) {
  if (!(a >= 0.0) || !(b >= 0.0)) throw InvalidArgument("prox weights must be nonnegative");
  require_same_shape(v, anchor, "anchor must match the prox argument");
  if (weights) require_same_shape(v, *weights, "weights must match the prox argument");
  Matrix out(v.rows(), v.cols());
  kernels::double_l1_prox(view(v), a, weights ? view(*weights) : std::span<const double>{}, b,
                          view(anchor), view(out));
  return out;
}

ReweightState update_reweights(const Matrix& current, const ReweightState& state) {
  if (!(state.epsilon > 0.0)) throw InvalidArgument("reweighting epsilon must be positive");
  ReweightState next = state;
  next.weights.resize(current.rows(), current.cols());
  kernels::inverse_abs(view(current), state.epsilon, view(next.weights));
  return next;
}

Matrix commutator_gram(const Matrix& s) {
  const auto n = s.rows();
  const Matrix eye = Matrix::Identity(n, n);
  Matrix q = Matrix::Zero(n * n, n * n);
  add_kron(q, s * s.transpose(), eye, 1.0);
  add_kron(q, s, s, -1.0);
  add_kron(q, s.transpose(), s.transpose(), -1.0);
  add_kron(q, eye, s.transpose() * s, 1.0);
  return q;
}

GSubproblem::GSubproblem(const Matrix& y, const Matrix& s, double gamma) : n_(y.rows()), y_(y) {
  if (!(gamma >= 0.0)) throw InvalidArgument("gamma must be nonnegative");
  if (s.rows() != n_ || s.cols() != n_) throw InvalidArgument("GSO and observations do not conform");

  Matrix q = Matrix::Zero(n_ * n_, n_ * n_);
  add_kron(q, y * y.transpose(), Matrix::Identity(n_, n_), 1.0);
  if (gamma > 0.0) q += gamma * commutator_gram(s);

  llt_.compute(q);
  constexpr double kMinRcond = 1e-14;
  if (llt_.info() != Eigen::Success || llt_.rcond() < kMinRcond) {
    ridge_ = 1e-10 * std::max(1.0, q.diagonal().mean());
    q.diagonal().array() += ridge_;
    llt_.compute(q);
    if (llt_.info() != Eigen::Success) throw SolverError("filter KKT system is singular");
  }

  Vector t = Vector::Zero(n_ * n_);
  for (Eigen::Index k = 0; k < n_; ++k) t(k + n_ * k) = 1.0;
  q_inv_trace_ = llt_.solve(t);
  trace_gain_ = t.dot(q_inv_trace_);
  if (!(trace_gain_ > 0.0) || !std::isfinite(trace_gain_)) throw SolverError("filter KKT system is singular");
}

Matrix GSubproblem::solve(const Matrix& x) const {
  if (x.rows() != n_ || x.cols() != y_.cols()) throw InvalidArgument("sources and observations do not conform");
  const Matrix rhs = x * y_.transpose();
  Vector g = llt_.solve(Eigen::Map<const Vector>(rhs.data(), rhs.size()));
  double trace = 0.0;
  for (Eigen::Index k = 0; k < n_; ++k) trace += g(k + n_ * k);
  g += ((1.0 - trace) / trace_gain_) * q_inv_trace_;
  Matrix out = Eigen::Map<Matrix>(g.data(), n_, n_);
  require_finite(out, "non-finite filter estimate");
  return out;
}

Matrix solve_g_subproblem(const Matrix& y, const Matrix& x, const Matrix& s, double gamma) {
  return GSubproblem(y, s, gamma).solve(x);
}

double graph_denoise_objective(const Matrix& s, const Matrix& g, const Matrix& s_bar, double beta,
                               double lambda, double gamma, const Matrix* weights_s) {
  const double l1 = weights_s ? weights_s->cwiseProduct(s.cwiseAbs()).sum() : s.cwiseAbs().sum();
  return beta * l1 + lambda * (s - s_bar).cwiseAbs().sum() + gamma * (g * s - s * g).squaredNorm();
}

ProxGradientResult prox_gradient_s(const Matrix& s0, const Matrix& g, const Matrix& s_bar, double beta,
                                   double lambda, double gamma, const Matrix* weights_s,
                                   const ProxGradientOptions& opts) {
  if (!(beta >= 0.0) || !(lambda >= 0.0) || !(gamma >= 0.0)) {
    throw InvalidArgument("regularization weights must be nonnegative");
  }
  require_same_shape(s0, s_bar, "warm start must match the observed GSO");
  require_same_shape(g, s_bar, "filter must match the observed GSO");
  if (weights_s) require_same_shape(*weights_s, s_bar, "weights must match the observed GSO");
  if (!s0.allFinite()) throw InvalidArgument("warm start must be finite");

  // Symmetrizing the weights makes the symmetric-projected prox exact.
  Matrix sym_weights;
  const Matrix* w = weights_s;
  if (opts.project_hollow_symmetric && weights_s) {
    sym_weights = 0.5 * (*weights_s + weights_s->transpose());
    w = &sym_weights;
  }

  const auto smooth = [&](const Matrix& s) { return gamma * (g * s - s * g).squaredNorm(); };
  const auto gradient = [&](const Matrix& s) -> Matrix {
    const Matrix c = g * s - s * g;
    return 2.0 * gamma * (g.transpose() * c - c * g.transpose());
  };
  const auto objective = [&](const Matrix& s) {
    return graph_denoise_objective(s, g, s_bar, beta, lambda, gamma, weights_s);
  };
  const auto prox = [&](const Matrix& v, double step) {
    if (opts.project_hollow_symmetric) {
      Matrix vs = 0.5 * (v + v.transpose());
      Matrix out = double_l1_prox(vs, step * beta, w, step * lambda, s_bar);
      symmetrize_hollow(out);
      return out;
    }
    return double_l1_prox(v, step * beta, w, step * lambda, s_bar);
  };

  ProxGradientResult res;
  res.s = s0;
  res.objective = objective(s0);

  if (gamma == 0.0) {
    // Separable problem: one prox step with an effectively infinite step size.
    constexpr double kInfiniteStep = 1e8;
    Matrix cand = prox(s0, kInfiniteStep);
    const double f = objective(cand);
    if (f <= res.objective) {
      res.s = std::move(cand);
      res.objective = f;
    }
    res.iterations = 1;
    if (opts.record_trace) res.trace.push_back(res.objective);
    return res;
  }

  // Power iteration for the top eigenvalue of S -> L*(L(S)), L(S) = GS - SG.
  double lip = 0.0;
  {
    Rng rng(0x5eedULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix v = Matrix::NullaryExpr(g.rows(), g.cols(), [&] { return normal(rng); });
    v /= v.norm();
    for (int it = 0; it < 60; ++it) {
      Matrix c = g * v - v * g;
      Matrix av = g.transpose() * c - c * g.transpose();
      const double nrm = av.norm();
      if (nrm == 0.0) break;
      lip = nrm;
      v = av / nrm;
    }
    lip = std::max(1.05 * 2.0 * gamma * lip, 1e-12);
  }

  Matrix x = s0;
  Matrix y = s0;
  double fx = res.objective;
  double t = 1.0;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    const Matrix grad = gradient(y);
    const double fy = smooth(y);
    Matrix z;
    // Backtracking keeps 1/L a valid step if power iteration underestimated.
    for (int bt = 0; bt < 60; ++bt) {
      z = prox(y - grad / lip, 1.0 / lip);
      const Matrix d = z - y;
      const double model = fy + (grad.cwiseProduct(d)).sum() + 0.5 * lip * d.squaredNorm();
      if (smooth(z) <= model + 1e-14 * std::max(1.0, std::abs(fy))) break;
      lip *= 2.0;
    }
    require_finite(z, "graph denoising diverged");
    const double residual = (z - y).norm();
    const double fz = objective(z);

    Matrix x_next = fz <= fx ? z : x;
    const double fx_next = std::min(fz, fx);
    if (opts.accelerate) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x);
      t = t_next;
    } else {
      y = x_next;
    }
    x = std::move(x_next);
    fx = fx_next;
    if (opts.record_trace) res.trace.push_back(fx);
    if (residual <= opts.tolerance * std::max(1.0, y.norm())) {
      ++it;
      break;
    }
  }
  res.s = std::move(x);
  res.objective = fx;
  res.iterations = it;
  return res;
}


ProxGradientResult coordinate_descent_s(const Matrix& s0, const Matrix& g, const Matrix& s_bar, double beta,
                                        double lambda, double gamma, const Matrix* weights_s,
                                        const ProxGradientOptions& opts) {
  if (!(beta >= 0.0) || !(lambda >= 0.0) || !(gamma >= 0.0)) {
    throw InvalidArgument("regularization weights must be nonnegative");
  }
  require_same_shape(s0, s_bar, "warm start must match the observed GSO");
  require_same_shape(g, s_bar, "filter must match the observed GSO");
  if (weights_s) require_same_shape(*weights_s, s_bar, "weights must match the observed GSO");
  if (!s0.allFinite()) throw InvalidArgument("warm start must be finite");

  const auto n = g.rows();
  Matrix s = s0;
  symmetrize_hollow(s);
  Matrix c = g * s - s * g;
  const Vector col_sq = g.colwise().squaredNorm().transpose();
  const Vector row_sq = g.rowwise().squaredNorm();

  ProxGradientResult res;
  int sweep = 0;
  for (; sweep < opts.max_iters; ++sweep) {
    double max_step = 0.0;
    double max_abs = 0.0;
    for (Eigen::Index j = 1; j < n; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) {
        // Moving s_ij = s_ji by d changes C by d * D with
        // D = G(e_i e_j' + e_j e_i') - (e_i e_j' + e_j e_i')G.
        const double curv = gamma * (col_sq(i) + col_sq(j) + row_sq(i) + row_sq(j) -
                                     4.0 * (g(i, i) * g(j, j) + g(i, j) * g(j, i)));
        const double w = weights_s ? 0.5 * ((*weights_s)(i, j) + (*weights_s)(j, i)) : 1.0;
        const double cur = s(i, j);
        double next;
        if (curv > 1e-300) {
          const double lin = gamma * (c.col(j).dot(g.col(i)) + c.col(i).dot(g.col(j)) -
                                      c.row(i).dot(g.row(j)) - c.row(j).dot(g.row(i)));
          next = double_l1_prox(cur - lin / curv, beta * w / curv, lambda / curv, s_bar(i, j));
        } else {
          next = lambda >= beta * w ? s_bar(i, j) : 0.0;
        }
        const double d = next - cur;
        if (d != 0.0) {
          c.col(j) += d * g.col(i);
          c.col(i) += d * g.col(j);
          c.row(i) -= d * g.row(j);
          c.row(j) -= d * g.row(i);
          s(i, j) = next;
          s(j, i) = next;
        }
        max_step = std::max(max_step, std::abs(d));
        max_abs = std::max(max_abs, std::abs(next));
      }
    }
    require_finite(s, "graph denoising diverged");
    if (opts.record_trace) res.trace.push_back(graph_denoise_objective(s, g, s_bar, beta, lambda, gamma, weights_s));
    if (max_step <= opts.tolerance * std::max(1.0, max_abs)) {
      ++sweep;
      break;
    }
    // Rebuild the commutator now and then to stop rank-one drift.
    if (sweep % 50 == 49) c = g * s - s * g;
  }
  res.objective = graph_denoise_objective(s, g, s_bar, beta, lambda, gamma, weights_s);
  res.iterations = sweep;
  res.s = std::move(s);
  return res;
}

}  // namespace rbdg
