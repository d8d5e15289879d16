#include <doctest.h>

#include <cmath>

#include "rbdg/error.hpp"
#include "rbdg/graph_model.hpp"
#include "rbdg/prox.hpp"
#include "rbdg/random.hpp"
#include "support/oracles.hpp"

using namespace rbdg;
using oracle::kron;
using oracle::vec;

namespace {

Matrix gaussian(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return Matrix::NullaryExpr(r, c, [&] { return normal(rng); });
}

Matrix random_sym_hollow(Rng& rng, Eigen::Index n, double density) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix s = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (unit(rng) < density) s(i, j) = s(j, i) = 1.0;
  return s;
}

// Optimality certificate for min beta|W o S|_1 + lambda|S - S_bar|_1 + gamma|GS - SG|^2
// over symmetric hollow S: per pair, zero must lie in gradient + subdifferential.
double step2_kkt_violation(const Matrix& s, const Matrix& g, const Matrix& s_bar, double beta, double lambda,
                           double gamma, const Matrix* w) {
  const Matrix c = g * s - s * g;
  const Matrix grad = 2.0 * gamma * (g.transpose() * c - c * g.transpose());
  double worst = 0.0;
  const auto n = s.rows();
  for (Eigen::Index j = 1; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) {
      const double gp = grad(i, j) + grad(j, i);
      const double a = beta * (w ? (*w)(i, j) + (*w)(j, i) : 2.0);
      const double b = 2.0 * lambda;
      const double v = s(i, j);
      const double anchor = s_bar(i, j);
      // Interval of subgradients of a|v| + b|v - anchor| (pair counted twice).
      double lo = 0.0, hi = 0.0;
      const auto add = [&](double x, double weight) {
        if (x > 0) { lo += weight; hi += weight; }
        else if (x < 0) { lo -= weight; hi -= weight; }
        else { lo -= weight; hi += weight; }
      };
      const double tol = 1e-12;
      add(std::abs(v) <= tol ? 0.0 : v, a);
      add(std::abs(v - anchor) <= tol ? 0.0 : v - anchor, b);
      const double need = -gp;
      const double viol = need < lo ? lo - need : (need > hi ? need - hi : 0.0);
      worst = std::max(worst, viol);
    }
  return worst;
}

}  // namespace

TEST_CASE("commutator gram matches explicit Kronecker factors") {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix s = gaussian(rng, 5, 5);
    const Matrix eye = Matrix::Identity(5, 5);
    const Matrix a = kron(s.transpose(), eye) - kron(eye, s);
    CHECK((commutator_gram(s) - a.transpose() * a).norm() < 1e-12 * (a.transpose() * a).norm());
    const Matrix g = gaussian(rng, 5, 5);
    CHECK(vec(g).dot(commutator_gram(s) * vec(g)) == doctest::Approx((g * s - s * g).squaredNorm()));
  }
}

TEST_CASE("G subproblem with identity data projects onto the trace hyperplane") {
  const Matrix eye = Matrix::Identity(6, 6);
  const Matrix g = solve_g_subproblem(eye, eye, Matrix::Zero(6, 6), 0.0);
  CHECK((g - eye / 6.0).norm() < 1e-12);
}

TEST_CASE("G subproblem without commutator term") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = gaussian(rng, 6, 6);
    const Matrix s = random_sym_hollow(rng, 6, 0.4);
    const Matrix eye = Matrix::Identity(6, 6);

    // Orthogonal Y: the metric is Euclidean, so the answer is the affine projection of XY^-1.
    const Matrix q = gaussian(rng, 6, 6).householderQr().householderQ();
    const Matrix ls_q = x * q.transpose();
    const Matrix proj = ls_q - ((ls_q.trace() - 1.0) / 6.0) * eye;
    CHECK((solve_g_subproblem(q, x, s, 0.0) - proj).norm() <= 1e-9 * proj.norm());

    // General Y: the correction lives along (YY^T)^-1.
    const Matrix y = gaussian(rng, 6, 6) + 3.0 * eye;
    const Matrix ls = x * y.inverse();
    const Matrix m = (y * y.transpose()).inverse();
    const Matrix expected = ls + ((1.0 - ls.trace()) / m.trace()) * m;
    CHECK((solve_g_subproblem(y, x, s, 0.0) - expected).norm() <= 1e-9 * expected.norm());
  }
}

TEST_CASE("G subproblem matches an explicit KKT oracle on 100 instances") {
  Rng rng(3);
  std::uniform_real_distribution<double> log_gamma(-3.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix y = gaussian(rng, 6, 8);
    const Matrix x = gaussian(rng, 6, 8);
    const Matrix s = random_sym_hollow(rng, 6, 0.5);
    const double gamma = std::pow(10.0, log_gamma(rng));
    const Matrix expected = oracle::g_subproblem_kkt(y, x, s, gamma);
    const Matrix g = solve_g_subproblem(y, x, s, gamma);
    CHECK((g - expected).norm() <= 1e-8 * expected.norm());
    CHECK(std::abs(g.trace() - 1.0) <= 1e-10);

    // Stationarity: the gradient is a multiple of the identity.
    const Matrix grad = 2.0 * (g * y - x) * y.transpose() +
                        2.0 * gamma * ((g * s - s * g) * s.transpose() - s.transpose() * (g * s - s * g));
    const double mu = grad.trace() / 6.0;
    CHECK((grad - mu * Matrix::Identity(6, 6)).norm() <= 1e-8 * std::max(1.0, grad.norm()));
  }
}

TEST_CASE("G subproblem survives rank-deficient observations") {
  Rng rng(4);
  const Matrix y = gaussian(rng, 6, 2);  // rank 2 < N
  const Matrix x = gaussian(rng, 6, 2);
  const GSubproblem sub(y, Matrix::Zero(6, 6), 0.0);
  CHECK(sub.ridge() > 0.0);
  const Matrix g = sub.solve(x);
  CHECK(g.allFinite());
  CHECK(std::abs(g.trace() - 1.0) <= 1e-10);
}

TEST_CASE("G subproblem validates shapes") {
  CHECK_THROWS_AS(solve_g_subproblem(Matrix::Identity(3, 3), Matrix::Identity(3, 3), Matrix::Zero(4, 4), 1.0),
                  InvalidArgument);
  CHECK_THROWS_AS(solve_g_subproblem(Matrix::Identity(3, 3), Matrix::Identity(3, 2), Matrix::Zero(3, 3), 1.0),
                  InvalidArgument);
  CHECK_THROWS_AS(solve_g_subproblem(Matrix::Identity(3, 3), Matrix::Identity(3, 3), Matrix::Zero(3, 3), -1.0),
                  InvalidArgument);
}

TEST_CASE("prox identities for a single active term") {
  Rng rng(5);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::exponential_distribution<double> expo(1.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = normal(rng), c = normal(rng), a = expo(rng), b = expo(rng);
    CHECK(double_l1_prox(v, 0.0, b, c) == doctest::Approx(c + soft_threshold(v - c, b)).epsilon(1e-14));
    CHECK(double_l1_prox(v, a, 0.0, c) == soft_threshold(v, a));
  }
  CHECK(double_l1_prox(2.0, 0.0, 0.5, 1.0) == 1.5);
  CHECK(double_l1_prox(-1.0, 0.7, 0.0, 3.0) == doctest::Approx(-0.3));
  CHECK(soft_threshold(1.5, 1.0) == 0.5);
  CHECK(soft_threshold(-0.3, 0.5) == 0.0);
}

TEST_CASE("reweights") {
  const ReweightState zero = update_reweights(Matrix::Zero(3, 3), {Matrix(), 1e-3, 3});
  CHECK((zero.weights.array() - 1000.0).abs().maxCoeff() < 1e-9);
  Matrix one(1, 1);
  one(0, 0) = 1.0 - 1e-3;
  CHECK(update_reweights(one, {Matrix(), 1e-3, 3}).weights(0, 0) == doctest::Approx(1.0));
  Matrix ramp(1, 5);
  ramp << 0.0, 0.1, 0.2, -0.5, 3.0;
  const Matrix w = update_reweights(ramp, {Matrix(), 1e-3, 3}).weights;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      if (std::abs(ramp(0, i)) < std::abs(ramp(0, j))) CHECK(w(0, i) > w(0, j));
}

TEST_CASE("graph denoising without commutator term") {
  Rng rng(6);
  const Matrix s_bar = random_sym_hollow(rng, 8, 0.4);
  const Matrix g = gaussian(rng, 8, 8);
  // Pure anchor term keeps the observation.
  for (auto solver : {prox_gradient_s, coordinate_descent_s}) {
    const auto res = solver(random_sym_hollow(rng, 8, 0.4), g, s_bar, 0.0, 1.0, 0.0, nullptr, {});
    CHECK(res.s == s_bar);
  }
  // Separable case: each entry is the 1-D minimizer of beta|s| + lambda|s - s_bar|.
  const auto res = prox_gradient_s(s_bar, g, s_bar, 0.3, 0.2, 0.0, nullptr, {});
  CHECK(res.s.cwiseAbs().maxCoeff() == 0.0);
  const auto keep = prox_gradient_s(s_bar, g, s_bar, 0.2, 0.3, 0.0, nullptr, {});
  CHECK(keep.s == s_bar);
}

TEST_CASE("identity filter makes every S commute") {
  Rng rng(7);
  const Matrix s_bar = random_sym_hollow(rng, 8, 0.4);
  const Matrix eye = Matrix::Identity(8, 8);
  for (auto solver : {prox_gradient_s, coordinate_descent_s}) {
    const auto res = solver(s_bar, eye, s_bar, 0.1, 0.5, 10.0, nullptr, {});
    CHECK((res.s - s_bar).norm() < 1e-9);
  }
}

TEST_CASE("graph denoising solvers satisfy the optimality conditions and agree") {
  Rng rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s_true = random_sym_hollow(rng, 6, 0.5);
    const Matrix s_bar = random_sym_hollow(rng, 6, 0.5);
    const Matrix g = evaluate_polynomial(s_true, gaussian(rng, 3, 1)) + 0.05 * gaussian(rng, 6, 6);
    const double beta = 0.01 * unit(rng), lambda = 0.05 * unit(rng) + 1e-3, gamma = 1.0;
    Matrix w = Matrix::NullaryExpr(6, 6, [&] { return 0.5 + unit(rng); });
    w = (0.5 * (w + w.transpose())).eval();
    const Matrix* wp = trial % 2 ? &w : nullptr;

    ProxGradientOptions opts;
    opts.max_iters = 200000;
    opts.tolerance = 1e-14;
    opts.record_trace = true;
    const auto pg = prox_gradient_s(s_bar, g, s_bar, beta, lambda, gamma, wp, opts);
    const auto cd = coordinate_descent_s(s_bar, g, s_bar, beta, lambda, gamma, wp, opts);
    for (std::size_t i = 1; i < pg.trace.size(); ++i) CHECK(pg.trace[i] <= pg.trace[i - 1]);
    for (std::size_t i = 1; i < cd.trace.size(); ++i) CHECK(cd.trace[i] <= cd.trace[i - 1] * (1 + 1e-14));

    CHECK(step2_kkt_violation(cd.s, g, s_bar, beta, lambda, gamma, wp) < 1e-9);
    CHECK(pg.objective == doctest::Approx(cd.objective).epsilon(1e-8));
    CHECK(cd.objective <= graph_denoise_objective(s_bar, g, s_bar, beta, lambda, gamma, wp));
    CHECK((cd.s - cd.s.transpose()).norm() == 0.0);
    CHECK(cd.s.diagonal().norm() == 0.0);
  }
}

TEST_CASE("graph denoising matches a subgradient oracle") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix s_true = random_sym_hollow(rng, 6, 0.5);
    const Matrix s_bar = random_sym_hollow(rng, 6, 0.5);
    const Matrix g = evaluate_polynomial(s_true, gaussian(rng, 3, 1)) + 0.05 * gaussian(rng, 6, 6);
    const double beta = 0.005, lambda = 0.02, gamma = 1.0;

    // Projected subgradient with diminishing steps, best iterate kept.
    Matrix s = s_bar;
    double best = graph_denoise_objective(s, g, s_bar, beta, lambda, gamma, nullptr);
    for (int it = 1; it <= 200000; ++it) {
      const Matrix c = g * s - s * g;
      Matrix sub = 2.0 * gamma * (g.transpose() * c - c * g.transpose());
      sub += beta * s.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
      sub += lambda * (s - s_bar).unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
      sub = (0.5 * (sub + sub.transpose())).eval();
      sub.diagonal().setZero();
      const double nrm = sub.norm();
      if (nrm == 0.0) break;
      s -= (0.05 / std::sqrt(static_cast<double>(it))) * sub / nrm;
      best = std::min(best, graph_denoise_objective(s, g, s_bar, beta, lambda, gamma, nullptr));
    }
    ProxGradientOptions opts;
    opts.max_iters = 200000;
    opts.tolerance = 1e-14;
    const auto cd = coordinate_descent_s(s_bar, g, s_bar, beta, lambda, gamma, nullptr, opts);
    CHECK(cd.objective <= best + 1e-6);
    CHECK(cd.objective >= best - 1e-3);
  }
}

TEST_CASE("graph denoising rejects bad input") {
  const Matrix z = Matrix::Zero(4, 4);
  CHECK_THROWS_AS(prox_gradient_s(z, z, z, -1.0, 0.0, 0.0, nullptr, {}), InvalidArgument);
  CHECK_THROWS_AS(coordinate_descent_s(z, Matrix::Zero(3, 3), z, 0.0, 0.0, 0.0, nullptr, {}), InvalidArgument);
  Matrix bad = z;
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(prox_gradient_s(bad, z, z, 0.0, 0.0, 1.0, nullptr, {}), InvalidArgument);
}

TEST_CASE("kernels are deterministic") {
  Rng rng(10);
  const Matrix s_bar = random_sym_hollow(rng, 7, 0.4);
  const Matrix g = gaussian(rng, 7, 7);
  const auto a = prox_gradient_s(s_bar, g, s_bar, 0.01, 0.02, 1.0, nullptr, {});
  const auto b = prox_gradient_s(s_bar, g, s_bar, 0.01, 0.02, 1.0, nullptr, {});
  CHECK(a.s == b.s);
  CHECK(a.iterations == b.iterations);
}
