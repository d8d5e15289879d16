#include <doctest.h>

#include "rbdg/error.hpp"
#include "rbdg/graph_model.hpp"
#include "rbdg/random.hpp"

using namespace rbdg;

namespace {

bool symmetric_hollow_binary(const Matrix& a) {
  if ((a - a.transpose()).cwiseAbs().maxCoeff() != 0.0) return false;
  if (a.diagonal().cwiseAbs().maxCoeff() != 0.0) return false;
  return ((a.array() == 0.0) || (a.array() == 1.0)).all();
}

int upper_nonzeros(const Matrix& a) {
  int count = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i) count += a(i, j) != 0.0;
  return count;
}

}  // namespace

TEST_CASE("ring lattice when nothing is rewired") {
  const Gso s = generate_small_world(20, 4, 0.0, 7);
  const Vector deg = s.matrix().rowwise().sum();
  CHECK((deg.array() == 4.0).all());
  CHECK(s.edge_count() == 40);
  CHECK(s.matrix()(0, 1) == 1.0);
  CHECK(s.matrix()(0, 2) == 1.0);
  CHECK(s.matrix()(0, 19) == 1.0);
  CHECK(s.matrix()(0, 3) == 0.0);
}

TEST_CASE("small world graphs keep the edge count and are connected") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Gso s = generate_small_world(20, 4, 0.2, seed);
    CHECK(s.edge_count() == 40);
    CHECK(symmetric_hollow_binary(s.matrix()));
    CHECK(s.is_connected());
  }
}

TEST_CASE("small world generation is deterministic") {
  CHECK(generate_small_world(20, 4, 0.2, 99).matrix() == generate_small_world(20, 4, 0.2, 99).matrix());
  CHECK(generate_small_world(20, 4, 0.2, 99).matrix() != generate_small_world(20, 4, 0.2, 100).matrix());
}

TEST_CASE("small world preconditions") {
  CHECK_THROWS_AS(generate_small_world(2, 2, 0.1, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_small_world(20, 3, 0.1, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_small_world(20, 20, 0.1, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_small_world(20, 4, 1.5, 1), InvalidArgument);
}

TEST_CASE("Gso validation") {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = 1.0;
  CHECK_THROWS_AS(Gso::from_matrix(a), InvalidArgument);
  a(1, 0) = 1.0;
  CHECK_NOTHROW(Gso::from_matrix(a));
  a(2, 2) = 1.0;
  CHECK_THROWS_AS(Gso::from_matrix(a), InvalidArgument);
  CHECK_THROWS_AS(Gso::from_matrix(Matrix::Zero(2, 3)), InvalidArgument);
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 1) = neg(1, 0) = -1.0;
  CHECK_THROWS_AS(Gso::from_matrix(neg), InvalidArgument);
}

TEST_CASE("rewiring with ratio 0 is the identity") {
  const Gso s = generate_small_world(20, 4, 0.2, 3);
  CHECK(perturb_rewire(s, {PerturbationKind::rewire, 0.0, 11}).matrix() == s.matrix());
}

TEST_CASE("10% rewiring of a 40-edge graph flips 8 pairs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Gso s = generate_small_world(20, 4, 0.2, seed);
    const Gso sb = perturb_rewire(s, {PerturbationKind::rewire, 0.1, seed + 1000});
    const Matrix diff = sb.matrix() - s.matrix();
    CHECK(upper_nonzeros(diff) == 8);
    CHECK(upper_nonzeros((diff.array() < 0.0).cast<double>().matrix()) == 4);
    CHECK(upper_nonzeros((diff.array() > 0.0).cast<double>().matrix()) == 4);
    CHECK(sb.edge_count() == 40);
  }
}

TEST_CASE("rewiring preserves structure for all ratios") {
  Rng rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Gso s = generate_small_world(20, 4, 0.2, static_cast<std::uint64_t>(trial));
    const double ratio = trial % 10 == 0 ? 1.0 : unit(rng);
    const Gso sb = perturb_rewire(s, {PerturbationKind::rewire, ratio, static_cast<std::uint64_t>(trial) * 7});
    CHECK(sb.edge_count() == s.edge_count());
    CHECK(symmetric_hollow_binary(sb.matrix()));
    const int p = static_cast<int>(std::llround(ratio * 40));
    CHECK(upper_nonzeros(sb.matrix() - s.matrix()) == 2 * p);
  }
}

TEST_CASE("rewiring fails on complete and empty graphs") {
  Matrix full = Matrix::Ones(5, 5);
  full.diagonal().setZero();
  CHECK_THROWS_AS(perturb_rewire(Gso::from_matrix(full), {PerturbationKind::rewire, 0.2, 1}), InvalidArgument);
  CHECK_THROWS_AS(perturb_rewire(Gso::from_matrix(Matrix::Zero(5, 5)), {PerturbationKind::rewire, 0.2, 1}),
                  InvalidArgument);
  CHECK_THROWS_AS(perturb_rewire(generate_small_world(20, 4, 0.2, 1), {PerturbationKind::rewire, -0.1, 1}),
                  InvalidArgument);
}

TEST_CASE("degree-zero filter") {
  const Gso s = generate_small_world(20, 4, 0.2, 1);
  Vector e0 = Vector::Zero(3);
  e0(0) = 1.0;
  const FilterPair f = make_filter(s, e0);
  CHECK(f.forward == Matrix::Identity(20, 20));
  CHECK((f.inverse - Matrix::Identity(20, 20)).norm() == doctest::Approx(0.0));
  CHECK((f.normalized_inverse() - Matrix::Identity(20, 20) / 20.0).norm() < 1e-15);
}

TEST_CASE("Horner evaluation matches explicit powers") {
  const Gso s = generate_small_world(12, 4, 0.3, 8);
  Vector c(4);
  c << 0.3, -0.2, 0.05, 0.01;
  const Matrix& a = s.matrix();
  const Matrix expected = c(0) * Matrix::Identity(12, 12) + c(1) * a + c(2) * a * a + c(3) * a * a * a;
  CHECK((evaluate_polynomial(a, c) - expected).norm() < 1e-12 * expected.norm());
}

TEST_CASE("synthesized filters commute with the graph and invert correctly") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Gso s = generate_small_world(20, 4, 0.2, seed);
    const FilterPair f = synthesize_filter(s, 3, seed + 17);
    CHECK((f.coeffs.array() >= 0.0).all());
    CHECK((f.coeffs.array() <= 1.0).all());
    const Matrix& a = s.matrix();
    const Matrix g = f.normalized_inverse();
    CHECK(commutator(f.forward, a).norm() <= 1e-10 * f.forward.norm() * a.norm());
    CHECK(commutator(g, a).norm() <= 1e-10 * g.norm() * a.norm());
    CHECK((f.forward * g - Matrix::Identity(20, 20) / f.trace_scale).norm() < 1e-8 * f.forward.norm());
    CHECK(g.trace() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(f.trace_scale) >= 1e-3);
    const Eigen::JacobiSVD<Matrix> svd(f.forward);
    CHECK(svd.singularValues()(0) / svd.singularValues()(19) <= 1e4);
  }
}

TEST_CASE("filter synthesis rejects bad arguments") {
  const Gso s = generate_small_world(10, 4, 0.2, 1);
  CHECK_THROWS_AS(synthesize_filter(s, 0, 1), InvalidArgument);
  CHECK_THROWS_AS(synthesize_filter(s, 11, 1), InvalidArgument);
  FilterLimits bad;
  bad.cond_limit = 1.0;
  CHECK_THROWS_AS(synthesize_filter(s, 3, 1, bad), InvalidArgument);
  FilterLimits impossible;
  impossible.cond_limit = 1.0 + 1e-12;
  impossible.max_attempts = 5;
  CHECK_THROWS_AS(synthesize_filter(s, 3, 1, impossible), GenerationError);
}

TEST_CASE("commutator examples") {
  const Gso s = generate_small_world(8, 2, 0.0, 1);
  const Matrix& a = s.matrix();
  CHECK(commutator(Matrix::Identity(8, 8), a).norm() == 0.0);
  CHECK(commutator(a * a, a).norm() == 0.0);
  Matrix e12 = Matrix::Zero(2, 2), e21 = Matrix::Zero(2, 2);
  e12(0, 1) = 1.0;
  e21(1, 0) = 1.0;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 1.0;
  expected(1, 1) = -1.0;
  CHECK(commutator(e12, e21) == expected);
  CHECK_THROWS_AS(commutator(Matrix::Zero(2, 2), Matrix::Zero(3, 3)), InvalidArgument);
}
