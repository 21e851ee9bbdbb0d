#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "conic/geometry.hpp"

using namespace conic;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Mat rotation(double angle) {
  Mat r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

}  // namespace

TEST_CASE("build_manifold examples") {
  ManifoldModel flat = build_manifold("flat", 2);
  CHECK(cometric(flat, v2(1.0, 2.0)).isApprox(Mat::Identity(2, 2)));
  CHECK(potential(flat, v2(1.0, 2.0)) == 0.0);

  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  CHECK(potential(inv, v2(3.0, 4.0)) == doctest::Approx(1.0 / 25.0));

  ManifoldModel bump = build_manifold("bump-metric", 2, {{"amplitude", 10.0}});
  CHECK(bump.rotationally_symmetric());

  CHECK_THROWS_AS(build_manifold("torus", 2), ModelError);
  CHECK_THROWS_AS(build_manifold("inverse-square", 2, {{"c", -1.0}}), ModelError);
  CHECK_THROWS_AS(build_manifold("flat", 2, {{"c", 1.0}}), ModelError);
  CHECK_THROWS_AS(build_manifold("bump-metric", 2, {{"amplitude", -1.5}}), ModelError);
  CHECK_THROWS_AS(build_manifold("flat", 1), ModelError);
}

TEST_CASE("non-positive-definite callable model names the point") {
  ManifoldModel bad = model_from_callables(
      "bad", 2,
      [](const Vec& z) {
        Mat g = Mat::Identity(2, 2);
        if (z.norm() > 3.5) g(1, 1) = -1.0;
        return g;
      },
      [](const Vec&) { return 0.0; });
  try {
    validate_model(bad);
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("(4, 0)") != std::string::npos);
  }
}

TEST_CASE("to_boundary_chart examples") {
  ManifoldModel flat = build_manifold("flat", 2);
  PhasePoint p = to_boundary_chart({v2(3.0, 4.0), v2(1.0, 0.0), {}}, flat);
  REQUIRE(p.boundary);
  CHECK(p.boundary->x == doctest::Approx(0.2));
  CHECK((p.boundary->y - v2(0.6, 0.8)).norm() < 1e-15);
  CHECK(p.boundary->lambda == doctest::Approx(0.6));
  CHECK((p.boundary->mu - v2(0.64, -0.48)).norm() < 1e-15);

  PhasePoint q = to_boundary_chart({v2(0.0, 2.0), v2(0.0, 3.0), {}}, flat);
  CHECK(q.boundary->x == 0.5);
  CHECK(q.boundary->lambda == 3.0);
  CHECK(q.boundary->mu.norm() == 0.0);

  CHECK_THROWS_AS(to_boundary_chart({v2(0.0, 0.0), v2(1.0, 0.0), {}}, flat), DomainError);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 100; ++i) {
    Vec z = v2(normal(rng), normal(rng)), zeta = v2(normal(rng), normal(rng));
    const BoundaryView b = *to_boundary_chart({z, zeta, {}}, flat).boundary;
    CHECK(std::abs(b.lambda * b.lambda + b.mu.squaredNorm() - zeta.squaredNorm()) <=
          1e-12 * (1.0 + zeta.squaredNorm()));
    CHECK(std::abs(b.y.norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("boundary chart round trip on every model") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi), logr(std::log(0.1), std::log(1e6));
  std::normal_distribution<double> normal;
  for (const char* label : {"flat", "inverse-square", "bump-metric", "conic-perturbation"}) {
    ManifoldModel m = build_manifold(label, 2);
    for (int i = 0; i < 50; ++i) {
      const double r = std::exp(logr(rng)), a = angle(rng);
      Vec z = r * v2(std::cos(a), std::sin(a));
      Vec zeta = v2(normal(rng), normal(rng));
      PhasePoint p = to_boundary_chart({z, zeta, {}}, m);
      const BoundaryView& b = *p.boundary;
      // Energy split holds in the metric norm.
      const double total = zeta.dot(cometric(m, z) * zeta);
      CHECK(std::abs(b.lambda * b.lambda + b.mu.dot(cometric(m, z) * b.mu) - total) <=
            1e-12 * (1.0 + total));
      PhasePoint back = from_boundary_chart(b, m);
      CHECK((back.z - z).norm() <= 1e-12 * r);
      CHECK((back.zeta - zeta).norm() <= 1e-12 * (1.0 + zeta.norm()));
    }
  }
}

TEST_CASE("hamiltonian_eval examples") {
  ManifoldModel flat = build_manifold("flat", 2);
  CHECK(hamiltonian_eval({v2(1.0, 1.0), v2(0.6, 0.8), {}}, flat, 1.0) ==
        doctest::Approx(0.0).epsilon(1e-15));
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  CHECK(hamiltonian_eval({v2(0.6, 0.8), v2(0.0, 0.0), {}}, inv, 1.0) ==
        doctest::Approx(0.0).epsilon(1e-15));

  const double amplitude = 2.0, width = 1.3;
  ManifoldModel bump =
      build_manifold("bump-metric", 2, {{"amplitude", amplitude}, {"width", width}});
  const Vec z = v2(0.4, -0.9), zeta = v2(1.2, 0.3);
  const double psi = 1.0 + amplitude * std::exp(-z.squaredNorm() / (width * width));
  Mat G = psi * Mat::Identity(2, 2);
  double direct = 0.0;
  const Mat Ginv = G.inverse();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) direct += Ginv(i, j) * zeta(i) * zeta(j);
  CHECK(hamiltonian_eval({z, zeta, {}}, bump, 0.7) ==
        doctest::Approx(direct - 0.49).epsilon(1e-14));
}

TEST_CASE("rotation invariance of symmetric models") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (const char* label : {"flat", "inverse-square", "bump-metric"}) {
    ManifoldModel m = build_manifold(label, 2);
    for (int i = 0; i < 20; ++i) {
      Vec z = v2(normal(rng), normal(rng)), zeta = v2(normal(rng), normal(rng));
      const Mat r = rotation(normal(rng));
      const double a = hamiltonian(m, z, zeta, 1.0) + 1.0;
      const double b = hamiltonian(m, r * z, r * zeta, 1.0) + 1.0;
      CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
    }
  }
}

TEST_CASE("automatic derivatives agree with finite differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (const char* label : {"inverse-square", "bump-metric", "conic-perturbation"}) {
    ManifoldModel m = build_manifold(label, 2);
    ManifoldModel fd = model_from_callables(label, 2, m.fields.cometric, m.fields.potential);
    for (int i = 0; i < 10; ++i) {
      Vec z = 2.5 * v2(normal(rng), normal(rng)), zeta = v2(normal(rng), normal(rng));
      if (z.norm() < 0.3) continue;
      const HamiltonianGradient a = hamiltonian_gradient(m, z, zeta, 1.0);
      const HamiltonianGradient b = hamiltonian_gradient(fd, z, zeta, 1.0);
      CHECK((a.dz - b.dz).norm() <= 1e-7 * (1.0 + a.dz.norm()));
      CHECK((a.dzeta - b.dzeta).norm() <= 1e-14 * (1.0 + a.dzeta.norm()));
      const Mat ha = hamiltonian_hessian(m, z, zeta);
      const Mat hb = hamiltonian_hessian(fd, z, zeta);
      CHECK((ha - hb).norm() <= 1e-5 * (1.0 + ha.norm()));
      CHECK((ha - ha.transpose()).norm() == 0.0);
    }
  }
}

TEST_CASE("higher dimensions") {
  ManifoldModel m = build_manifold("bump-metric", 3);
  Vec z(3), zeta(3);
  z << 0.3, -0.2, 0.5;
  zeta << 0.1, 0.7, -0.4;
  CHECK(hamiltonian_hessian(m, z, zeta).rows() == 6);
}
