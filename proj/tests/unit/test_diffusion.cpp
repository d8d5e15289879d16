#include <doctest.h>

#include "rbdg/diffusion.hpp"
#include "rbdg/error.hpp"
#include "rbdg/solver.hpp"

using namespace rbdg;

TEST_CASE("every source column has exactly K nonzeros") {
  for (int k = 1; k <= 6; ++k) {
    const SignalMatrix x = generate_sources(20, 50, {k, 0.0, static_cast<std::uint64_t>(k)});
    CHECK(x.role == SignalRole::sources);
    CHECK(x.nodes() == 20);
    CHECK(x.signals() == 50);
    for (Eigen::Index j = 0; j < 50; ++j) CHECK((x.entries.col(j).array() != 0.0).count() == k);
  }
}

TEST_CASE("K = n gives dense sources") {
  const SignalMatrix x = generate_sources(20, 50, {20, 0.0, 3});
  CHECK((x.entries.array() != 0.0).all());
}

TEST_CASE("source generation is deterministic and validates") {
  CHECK(generate_sources(20, 10, {2, 0.0, 4}).entries == generate_sources(20, 10, {2, 0.0, 4}).entries);
  CHECK_THROWS_AS(generate_sources(20, 10, {0, 0.0, 4}), InvalidArgument);
  CHECK_THROWS_AS(generate_sources(20, 10, {21, 0.0, 4}), InvalidArgument);
  CHECK_THROWS_AS(generate_sources(0, 10, {1, 0.0, 4}), InvalidArgument);
}

TEST_CASE("identity filter without noise returns the sources") {
  const Gso s = generate_small_world(20, 4, 0.2, 1);
  Vector e0 = Vector::Zero(1);
  e0(0) = 1.0;
  const FilterPair f = make_filter(s, e0);
  const SignalMatrix x = generate_sources(20, 50, {2, 0.0, 9});
  const SignalMatrix y = diffuse(f, x, 0.0, 1);
  CHECK(y.role == SignalRole::observations);
  CHECK(y.entries == x.entries);
}

TEST_CASE("normalized inverse maps observations to scaled sources") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Gso s = generate_small_world(20, 4, 0.2, seed);
    const FilterPair f = synthesize_filter(s, 3, seed);
    const SignalMatrix x = generate_sources(20, 50, {2, 0.0, seed});
    const SignalMatrix y = diffuse(f, x, 0.0, seed);
    const Matrix target = x.entries / f.trace_scale;
    CHECK((f.normalized_inverse() * y.entries - target).norm() <= 1e-8 * target.norm());

    const GroundTruth gt = normalize_ground_truth(f, x);
    CHECK(gt.g_ref.trace() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((gt.g_ref * y.entries - gt.x_ref.entries).norm() <= 1e-9 * gt.x_ref.entries.norm());
  }
}

TEST_CASE("ground truth normalization enforces the trace floor") {
  const Gso s = generate_small_world(20, 4, 0.2, 2);
  FilterPair f = synthesize_filter(s, 3, 2);
  const SignalMatrix x = generate_sources(20, 5, {2, 0.0, 2});
  f.trace_scale = 1e-6;
  CHECK_THROWS_AS(normalize_ground_truth(f, x), InvalidArgument);
}

TEST_CASE("noise power matches its definition on average") {
  const Gso s = generate_small_world(20, 4, 0.2, 6);
  const FilterPair f = synthesize_filter(s, 3, 6);
  const SignalMatrix x = generate_sources(20, 100, {2, 0.0, 6});
  const Matrix clean = f.forward * x.entries;
  double ratio = 0.0;
  constexpr int kDraws = 200;
  for (int d = 0; d < kDraws; ++d) {
    const SignalMatrix y = diffuse(f, x, 0.01, static_cast<std::uint64_t>(d));
    ratio += (y.entries - clean).squaredNorm() / clean.squaredNorm();
  }
  CHECK(ratio / kDraws == doctest::Approx(0.01).epsilon(0.02));
  CHECK_THROWS_AS(diffuse(f, x, -1.0, 0), InvalidArgument);
}
