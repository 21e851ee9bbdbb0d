#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "conic/numerics/extrapolation.hpp"
#include "conic/numerics/ode.hpp"
#include "conic/numerics/parallel.hpp"
#include "conic/numerics/quadrature.hpp"
#include "conic/numerics/roots.hpp"

using namespace conic;
using namespace conic::numerics;

TEST_CASE("Dormand-Prince integrates the harmonic oscillator") {
  Rhs rhs = [](double, const Vec& y, Vec& dy) {
    dy.resize(2);
    dy << y(1), -y(0);
  };
  Vec y(2);
  y << 1.0, 0.0;
  AdaptiveOptions opts;
  opts.abs_tol = opts.rel_tol = 1e-12;
  integrate_adaptive(rhs, 0.0, y, 10.0, opts);
  CHECK(y(0) == doctest::Approx(std::cos(10.0)).epsilon(1e-10));
  CHECK(y(1) == doctest::Approx(-std::sin(10.0)).epsilon(1e-10));
}

TEST_CASE("breakpoints are hit exactly in both directions") {
  Rhs rhs = [](double, const Vec& y, Vec& dy) { dy = -y; };
  for (double sign : {1.0, -1.0}) {
    Vec y = Vec::Ones(1);
    std::vector<double> seen;
    AdaptiveOptions opts;
    integrate_adaptive(rhs, 0.0, y, sign * 3.0, opts, {sign * 0.5, sign * 1.25, sign * 7.0},
                       [&](double s, const Vec&, bool at) {
                         if (at) seen.push_back(s);
                       });
    REQUIRE(seen.size() == 3);
    CHECK(seen[0] == sign * 0.5);
    CHECK(seen[1] == sign * 1.25);
    CHECK(seen[2] == sign * 3.0);
    CHECK(y(0) == doctest::Approx(std::exp(-sign * 3.0)).epsilon(1e-9));
  }
}

TEST_CASE("implicit midpoint conserves a quadratic invariant") {
  Rhs rhs = [](double, const Vec& y, Vec& dy) {
    dy.resize(2);
    dy << y(1), -y(0);
  };
  Vec y(2), y_new;
  y << 1.0, 0.0;
  for (int i = 0; i < 1000; ++i) {
    implicit_midpoint_step(rhs, 0.0, y, 0.1, y_new);
    y = y_new;
  }
  CHECK(y.squaredNorm() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("Gauss-Kronrod handles endpoint singularities") {
  auto r = gauss_kronrod([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, 1e-12, 1e-12);
  CHECK(r.value == doctest::Approx(2.0).epsilon(1e-10));
  auto s = gauss_kronrod([](double x) { return std::sin(x); }, 0.0, kPi, 1e-14, 1e-14);
  CHECK(s.value == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("Gauss-Legendre is exact for polynomials of degree 2p - 1") {
  auto [x, w] = gauss_legendre(5, 0.0, 2.0);
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) sum += w(i) * std::pow(x(i), 9);
  CHECK(sum == doctest::Approx(102.4).epsilon(1e-13));
}

TEST_CASE("inverse-radius extrapolation recovers the limit") {
  std::vector<double> r = {1e3, 2e3, 4e3};
  std::vector<double> f;
  for (double v : r) f.push_back(2.5 + 3.0 / v - 7.0 / (v * v));
  LimitFit fit = limit_in_inverse_radius(r, f, 2);
  CHECK(fit.limit == doctest::Approx(2.5).epsilon(1e-13));
  CHECK(fit.coefficients(0) == doctest::Approx(3.0).epsilon(1e-8));
  std::vector<Vec> vf;
  for (double v : r) vf.push_back(Vec::Constant(2, 1.0 + 1.0 / v));
  CHECK((limit_in_inverse_radius(r, vf, 2) - Vec::Ones(2)).norm() < 1e-12);
}

TEST_CASE("Brent root and bracket failure") {
  CHECK(brent_root([](double x) { return x * x - 2.0; }, 0.0, 2.0) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(brent_root([](double x) { return x * x + 1.0; }, 0.0, 2.0), ConvergenceError);
}

TEST_CASE("Halton helpers") {
  CHECK(nth_prime(0) == 2);
  CHECK(nth_prime(4) == 11);
  CHECK(radical_inverse(1, 2) == 0.5);
  CHECK(radical_inverse(3, 2) == 0.75);
  CHECK(radical_inverse(5, 3) == doctest::Approx(7.0 / 9.0));
}

TEST_CASE("parallel_for writes by index and rethrows") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw DomainError("seven");
                               }),
                  DomainError);
}
