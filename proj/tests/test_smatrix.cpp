#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "conic/oracle.hpp"
#include "conic/smatrix.hpp"

using namespace conic;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec angle_vec(double a) { return v2(std::cos(a), std::sin(a)); }

}  // namespace

TEST_CASE("flat space: diagonal is degenerate, off-diagonal is empty") {
  ManifoldModel flat = build_manifold("flat", 2);
  SMatrixOptions o;
  o.impact_grid = 11;
  ConnectingSearch diag = find_connecting_geodesics(v2(1, 0), v2(1, 0), flat, 1.0, o);
  CHECK(diag.degenerate);
  CHECK(diag.geodesics.empty());
  CHECK(diag.report.find("degenerate") != std::string::npos);
  CHECK_THROWS_AS(assemble_smatrix(10.0, diag, 2), DegenerateError);

  ConnectingSearch off = find_connecting_geodesics(v2(1, 0), angle_vec(0.7), flat, 1.0, o);
  CHECK_FALSE(off.degenerate);
  CHECK(off.geodesics.empty());
  CHECK(assemble_smatrix(10.0, v2(1, 0), angle_vec(0.7), flat, 1.0, o).value == Complex(0.0, 0.0));

  TotalSojourn t = scatter(v2(1, 0), v2(0, 0.8), flat, 1.0);
  const SigmaResult s = jacobian_sigma(t, flat, 1.0);
  CHECK_FALSE(s.nondegenerate);
  CHECK(s.sigma < 1e-9);
}

TEST_CASE("inverse-square connecting geodesics") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  ConnectingSearch quarter = find_connecting_geodesics(v2(1, 0), v2(0, 1), inv, 1.0);
  REQUIRE(quarter.geodesics.size() == 1);
  const ConnectingGeodesic& g = quarter.geodesics.front();
  CHECK(g.impact(1) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-8));
  CHECK(std::abs(g.impact(0)) < 1e-12);
  CHECK((g.y_out - v2(0, 1)).norm() <= 1e-8);
  CHECK(g.newton.converged);
  CHECK(g.sojourn.tau == doctest::Approx(-kPi / std::sqrt(4.0 / 3.0)).epsilon(1e-7));

  ConnectingSearch by_angle = find_connecting_geodesics_by_deflection(v2(1, 0), kPi / 2, inv, 1.0);
  REQUIRE(by_angle.geodesics.size() == 1);
  CHECK((by_angle.geodesics[0].impact - g.impact).norm() < 1e-8);

  ConnectingSearch beyond = find_connecting_geodesics_by_deflection(v2(1, 0), 3.5, inv, 1.0);
  CHECK_FALSE(beyond.degenerate);
  CHECK(beyond.geodesics.empty());
}

TEST_CASE("sigma against the closed-form deflection") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  for (double b : {0.5, 2.0}) {
    const double h = 1e-5;
    const double dtheta =
        (inverse_square_deflection(b + h, 1.0, 1.0) - inverse_square_deflection(b - h, 1.0, 1.0)) / (2 * h);
    const SigmaResult plus = jacobian_sigma(scatter(v2(1, 0), v2(0, b), inv, 1.0), inv, 1.0);
    const SigmaResult minus = jacobian_sigma(scatter(v2(1, 0), v2(0, -b), inv, 1.0), inv, 1.0);
    CHECK(plus.nondegenerate);
    CHECK(plus.sigma == doctest::Approx(std::abs(dtheta)).epsilon(1e-6));
    CHECK(std::abs(plus.sigma - minus.sigma) <= 1e-10 * plus.sigma);
  }
}

TEST_CASE("assembled entries: scaling, phase and reciprocity") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  const ConnectingSearch s = find_connecting_geodesics(v2(1, 0), v2(0, 1), inv, 1.0);
  const SMatrixEntry a = assemble_smatrix(20.0, s, 2);
  const SMatrixEntry b = assemble_smatrix(40.0, s, 2);
  CHECK(std::abs(b.value) / std::abs(a.value) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  REQUIRE(a.contributions.size() == 1);
  CHECK_FALSE(a.phase_convention_sensitive);
  CHECK(std::abs(a.value) <= a.contributions[0].amplitude * (1.0 + 1e-15));

  const double d = 1e-4;
  const double dphase =
      std::arg(assemble_smatrix(20.0 + d, s, 2).value / assemble_smatrix(20.0 - d, s, 2).value) / (2 * d);
  const double tau = inverse_square_sojourn(1.0 / std::sqrt(3.0), 1.0, 1.0);
  CHECK(std::abs(dphase - tau) <= 1e-6);

  const ConnectingSearch back = find_connecting_geodesics(v2(0, 1), v2(1, 0), inv, 1.0);
  CHECK(std::abs(std::abs(assemble_smatrix(20.0, back, 2).value) - std::abs(a.value)) <=
        1e-10 * std::abs(a.value));
}

TEST_CASE("three dimensions") {
  ManifoldModel inv = build_manifold("inverse-square", 3, {{"c", 1.0}});
  Vec y(3), out(3);
  y << 1, 0, 0;
  out << 0, 0.6, 0.8;
  ConnectingSearch s = find_connecting_geodesics(y, out, inv, 1.0);
  REQUIRE(s.geodesics.size() == 1);
  const ConnectingGeodesic& g = s.geodesics[0];
  CHECK(g.impact.norm() == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-8));
  CHECK((g.y_out - out).norm() <= 1e-8);
  // Central potential: sigma = |dTheta/db| sin(Theta) / b.
  const double b = g.impact.norm(), h = 1e-5;
  const double dtheta =
      (inverse_square_deflection(b + h, 1.0, 1.0) - inverse_square_deflection(b - h, 1.0, 1.0)) / (2 * h);
  CHECK(*g.sojourn.sigma == doctest::Approx(std::abs(dtheta) / b).epsilon(1e-6));
  const SMatrixEntry e20 = assemble_smatrix(20.0, s, 3), e40 = assemble_smatrix(40.0, s, 3);
  CHECK(std::abs(e40.value) / std::abs(e20.value) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("input validation") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  CHECK_THROWS_AS(find_connecting_geodesics(v2(2, 0), v2(0, 1), inv, 1.0), DomainError);
  CHECK_THROWS_AS(find_connecting_geodesics_by_deflection(Vec::Unit(3, 0), 1.0,
                                                          build_manifold("flat", 3), 1.0),
                  DomainError);
  CHECK_THROWS_AS(assemble_smatrix(0.0, ConnectingSearch{}, 2), DomainError);
}
