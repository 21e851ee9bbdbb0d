#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "conic/flow.hpp"

using namespace conic;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

FlowOptions until(double s) {
  FlowOptions o;
  o.s_max = s;
  return o;
}

}  // namespace

TEST_CASE("flat straight lines") {
  ManifoldModel flat = build_manifold("flat", 2);
  Trajectory t = integrate_bicharacteristic({v2(0, 1), v2(1, 0), {}}, flat, 1.0,
                                            Direction::forward, until(10.0));
  CHECK(t.end == EndStatus::parameter_limit);
  CHECK(t.back().s == 10.0);
  CHECK((t.back().z - v2(10, 1)).norm() < 1e-10);
  CHECK((t.back().zeta - v2(1, 0)).norm() < 1e-12);
  CHECK(t.back().A == doctest::Approx(10.0).epsilon(1e-12));

  Trajectory u = integrate_bicharacteristic({v2(0, 0), v2(2, 0), {}}, flat, 2.0,
                                            Direction::forward, until(3.0));
  CHECK((u.back().z - v2(6, 0)).norm() < 1e-10);

  Trajectory b = integrate_bicharacteristic({v2(0, 1), v2(1, 0), {}}, flat, 1.0,
                                            Direction::backward, until(4.0));
  CHECK(b.back().s == -4.0);
  CHECK((b.back().z - v2(-4, 1)).norm() < 1e-10);
  CHECK(b.back().A == doctest::Approx(-4.0));
}

TEST_CASE("start is projected onto the shell") {
  ManifoldModel flat = build_manifold("flat", 2);
  Trajectory t = integrate_bicharacteristic({v2(0, 1), v2(3, 0), {}}, flat, 1.0,
                                            Direction::forward, until(1.0));
  CHECK(t.diagnostics.projected);
  CHECK(t.diagnostics.start_residual == doctest::Approx(8.0));
  CHECK((t.samples.front().zeta - v2(1, 0)).norm() < 1e-15);
}

TEST_CASE("radius events are landed exactly and escape stops the flow") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  FlowOptions o;
  o.radius_events = {1e3, 2e3};
  o.escape_radius = 4e3;
  Trajectory t = integrate_bicharacteristic({v2(0, 2), v2(1, 0), {}}, inv, 1.0,
                                            Direction::forward, o);
  CHECK(t.escaped());
  REQUIRE(t.event_radii.size() == 3);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(std::abs(t.samples[t.event_samples[k]].z.norm() - t.event_radii[k]) <=
          1e-12 * t.event_radii[k]);
  CHECK(t.event_samples.back() == t.samples.size() - 1);
}

TEST_CASE("energy drift on inverse-square out to 1e4") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  FlowOptions o;
  o.escape_radius = 1e4;
  for (Direction d : {Direction::forward, Direction::backward}) {
    Trajectory t = integrate_bicharacteristic({v2(0, 2), v2(1, 0), {}}, inv, 1.0, d, o);
    CHECK(t.escaped());
    CHECK(t.diagnostics.max_drift <= 1e-9);
  }
}

TEST_CASE("guard radius violation throws") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 0.0}, {"guard_radius", 0.5}});
  CHECK_THROWS_AS(integrate_bicharacteristic({v2(-5, 0.01), v2(1, 0), {}}, inv, 1.0,
                                             Direction::forward, until(20.0)),
                  GuardRadiusError);
}

TEST_CASE("time reversal") {
  for (const char* label : {"flat", "inverse-square"}) {
    ManifoldModel m = build_manifold(label, 2);
    Trajectory f = integrate_bicharacteristic({v2(-3, 1.5), v2(0.8, 0.1), {}}, m, 1.0,
                                              Direction::forward, until(12.0));
    Trajectory b = integrate_bicharacteristic({f.back().z, f.back().zeta, {}}, m, 1.0,
                                              Direction::backward, until(12.0));
    Vec start(4), end(4);
    start << f.samples.front().z, f.samples.front().zeta;
    end << b.back().z, b.back().zeta;
    CHECK((start - end).norm() <= 1e-7);
  }
}

TEST_CASE("Jacobi frame: identity start, free growth, symplectic") {
  ManifoldModel flat = build_manifold("flat", 2);
  Trajectory t = integrate_bicharacteristic({v2(0, 1), v2(1, 0), {}}, flat, 1.0,
                                            Direction::forward, until(7.0));
  VariationalFrame f = integrate_jacobi(t, flat);
  REQUIRE(f.J.size() == t.samples.size());
  CHECK(f.J.front().isIdentity(0.0));
  for (std::size_t k = 0; k < f.J.size(); ++k) {
    Mat expected = Mat::Identity(4, 4);
    expected.topRightCorner(2, 2) = f.s[k] * Mat::Identity(2, 2);
    CHECK((f.J[k] - expected).norm() <= 1e-10 * (1.0 + f.s[k]));
    CHECK(f.s[k] == t.samples[k].s);
  }
  CHECK(f.max_symplectic_defect <= 1e-6);
}

TEST_CASE("Jacobi frame matches finite differences on inverse-square") {
  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}});
  const Vec z0 = v2(-4, 2), k0 = v2(std::sqrt(1.0 - 1.0 / 20.0), 0);
  const double S = 15.0;
  Trajectory t = integrate_bicharacteristic({z0, k0, {}}, inv, 1.0, Direction::forward, until(S));
  VariationalFrame f = integrate_jacobi(t, inv);
  CHECK(f.max_symplectic_defect <= 1e-6);
  const double delta = 1e-6;
  FlowOptions o = until(S);
  o.projection_tol = 1e300;  // keep perturbed seeds off the shell
  for (int j = 0; j < 4; ++j) {
    Vec wp(4), wm(4);
    wp << z0, k0;
    wm = wp;
    wp(j) += delta;
    wm(j) -= delta;
    Trajectory tp = integrate_bicharacteristic({wp.head(2), wp.tail(2), {}}, inv, 1.0,
                                               Direction::forward, o);
    Trajectory tm = integrate_bicharacteristic({wm.head(2), wm.tail(2), {}}, inv, 1.0,
                                               Direction::forward, o);
    Vec ep(4), em(4);
    ep << tp.back().z, tp.back().zeta;
    em << tm.back().z, tm.back().zeta;
    const Vec column = (ep - em) / (2.0 * delta);
    const Vec frame_col = f.J.back().col(j);
    CHECK((column - frame_col).norm() <= 1e-4 * frame_col.norm());
  }
}

TEST_CASE("trapping classification") {
  ManifoldModel flat = build_manifold("flat", 2);
  TrappingOptions o;
  o.seed_count = 50;
  o.flow.escape_radius = 100.0;
  o.flow.s_max = 500.0;
  TrappingReport r = detect_trapping(flat, 1.0, o);
  CHECK(r.trapped_count == 0);
  CHECK(r.seeds.size() == 50);

  ManifoldModel inv = build_manifold("inverse-square", 2, {{"c", 1.0}, {"guard_radius", 1e-3}});
  TrappingReport ri = detect_trapping(inv, 1.0, o);
  CHECK(ri.trapped_count == 0);

  ManifoldModel bump = build_manifold("bump-metric", 2, {{"amplitude", 10.0}});
  o.seed_radius = 1.5;
  o.seed_count = 60;
  o.flow.escape_radius = 20.0;
  o.flow.s_max = 150.0;
  TrappingReport rb = detect_trapping(bump, 1.0, o);
  CHECK(rb.trapped_count > 0);
}
