#include "conic/oracle.hpp"

#include <cmath>

#include "conic/numerics/quadrature.hpp"
#include "conic/numerics/roots.hpp"

namespace conic {

Complex free_resolvent(const Vec& z, const Vec& zp, double h, double lambda0, int n) {
  if (n != 3 || z.size() != 3 || zp.size() != 3)
    throw DomainError("the closed-form resolvent kernel is implemented for n = 3 only");
  if (!(h > 0.0)) throw DomainError("resolvent needs h > 0");
  const double d = (z - zp).norm();
  if (d == 0.0) throw DomainError("resolvent kernel is singular on the diagonal");
  return std::polar(1.0 / (4.0 * kPi * h * h * d), lambda0 * d / h);
}

Complex free_propagator(const Vec& z, const Vec& zp, double t) {
  if (!(t > 0.0)) throw DomainError("propagator needs t > 0");
  const double n = static_cast<double>(z.size());
  const double modulus = std::pow(2.0 * kPi * t, -0.5 * n);
  return std::polar(modulus, (z - zp).squaredNorm() / (2.0 * t) - kPi * n / 4.0);
}

Complex free_poisson(double lambda, const Vec& z, const Vec& yp, double c_n) {
  return c_n * std::polar(1.0, -lambda * yp.dot(z));
}

double inverse_square_deflection(double b, double c, double lambda0) {
  const double J = lambda0 * b;
  return kPi * (1.0 - J / std::sqrt(J * J + c));
}

double inverse_square_sojourn(double b, double c, double lambda0) {
  const double J = lambda0 * b;
  if (c == 0.0) return 0.0;
  return -kPi * c / std::sqrt(J * J + c);
}

double turning_radius(const RadialQuadratureSpec& spec) {
  const double E = spec.energy, J = spec.J;
  if (!(E > 0.0)) throw DomainError("turning point search needs E > 0");
  auto W = [&](double r) { return E - spec.potential(r) - J * J / (r * r); };
  double hi = std::max(1.0, 2.0 * std::abs(J) / std::sqrt(E));
  int guard = 0;
  while (!(W(hi) > 0.0)) {
    hi *= 2.0;
    if (++guard > 200) throw DomainError("no classically allowed region at large r");
  }
  // Outermost sign change, scanning inward geometrically.
  double lo = hi;
  for (guard = 0; guard < 4000; ++guard) {
    const double next = lo / 1.01;
    if (!(W(next) > 0.0)) {
      lo = next;
      return numerics::brent_root(W, lo, lo * 1.01, 1e-16 * lo);
    }
    lo = next;
    if (lo < 1e-12) break;
  }
  throw DomainError("no turning point found (orbit reaches the origin)");
}

RadialQuadratureResult central_scattering(const RadialQuadratureSpec& spec) {
  const double E = spec.energy, J = spec.J, lambda0 = std::sqrt(E);
  RadialQuadratureResult out;
  if (J == 0.0) throw DomainError("radial orbits have no deflection integral; use J > 0");
  const double rmin = turning_radius(spec);
  out.turning_radius = rmin;
  const double v_min = spec.potential(rmin);
  // W(r) - W(r_min), so the radicand vanishes exactly at u = 0.
  auto radicand = [&](double u, double r) {
    const double s = std::sin(u);
    return v_min - spec.potential(r) + J * J * s * s / (rmin * rmin);
  };
  auto deflection_integrand = [&](double u) {
    const double r = rmin / std::cos(u);
    const double w = radicand(u, r);
    if (w <= 0.0) return 0.0;
    return J * std::sin(u) / (rmin * std::sqrt(w));
  };
  auto sojourn_integrand = [&](double u) {
    const double c = std::cos(u);
    const double r = rmin / c;
    const double w = radicand(u, r);
    if (w <= 0.0) return 0.0;
    const double v = spec.potential(r);
    const double k = E - v;
    // (E - V)/sqrt(W) - sqrt(E), rearranged to avoid cancellation at large r.
    const double numer = -v * k + E * J * J / (r * r);
    const double diff = numer / (std::sqrt(w) * (k + std::sqrt(E * w)));
    const double dr = rmin * std::sin(u) / (c * c);
    return diff * dr;
  };
  const double top = 0.5 * kPi;
  auto phi = numerics::gauss_kronrod(deflection_integrand, 0.0, top, spec.abs_tol, spec.rel_tol);
  auto tau = numerics::gauss_kronrod(sojourn_integrand, 0.0, top, spec.abs_tol, spec.rel_tol);
  out.deflection = kPi - 2.0 * phi.value;
  out.sojourn = 2.0 * (tau.value - lambda0 * rmin);
  out.error = 2.0 * (phi.error + tau.error);
  out.evaluations = phi.evaluations + tau.evaluations;
  return out;
}

double central_deflection(double b, const std::function<double(double)>& V, double lambda0) {
  if (!(b > 0.0)) throw DomainError("impact parameter must be positive");
  return central_scattering({V, lambda0 * lambda0, lambda0 * b}).deflection;
}

double central_sojourn(double b, const std::function<double(double)>& V, double lambda0) {
  if (!(b > 0.0)) throw DomainError("impact parameter must be positive");
  return central_scattering({V, lambda0 * lambda0, lambda0 * b}).sojourn;
}

TrappingOracle effective_potential_trapping(const ManifoldModel& m, double lambda0, double r_lo,
                                            double r_hi, int grid) {
  if (!m.radial) throw DomainError("effective-potential oracle needs a rotationally symmetric model");
  const RadialProfile& profile = *m.radial;
  const double E = lambda0 * lambda0;
  auto F = [&](double r) {
    const Dual rd(r, DerivativeVec::Unit(1, 0));
    const Dual psi = profile.conformal_factor(rd);
    const Dual kinetic = E - profile.potential(rd);
    const Dual r2 = rd * rd;
    const Dual f = r2 * psi;
    return Dual(f * kinetic);
  };
  auto dF = [&](double r) {
    const Dual f = F(r);
    return f.derivatives().size() ? f.derivatives()(0) : 0.0;
  };
  TrappingOracle out;
  const double ratio = std::pow(r_hi / r_lo, 1.0 / grid);
  double a = r_lo, fa = dF(a);
  for (int k = 1; k <= grid; ++k) {
    const double b = r_lo * std::pow(ratio, k);
    const double fb = dF(b);
    if (fa != 0.0 && (fa > 0.0) != (fb > 0.0)) {
      const double r = numerics::brent_root(dF, a, b, 1e-15 * b);
      const double f = F(r).value();
      if (f > 0.0) out.orbits.push_back({r, std::sqrt(f), fa > 0.0});
    }
    a = b;
    fa = fb;
  }
  // A local maximum of F followed by a local minimum bounds a pocket of bounded orbits.
  for (std::size_t k = 0; k + 1 < out.orbits.size(); ++k) {
    const CircularOrbit& stable = out.orbits[k];
    const CircularOrbit& unstable = out.orbits[k + 1];
    if (!stable.stable || unstable.stable) continue;
    const double level = F(unstable.radius).value();
    double inner = r_lo;
    auto shifted = [&](double r) { return F(r).value() - level; };
    if (shifted(r_lo) < 0.0) inner = numerics::brent_root(shifted, r_lo, stable.radius, 1e-15);
    if (!out.trapping || unstable.radius > out.outer_radius) {
      out.trapping = true;
      out.inner_radius = inner;
      out.outer_radius = unstable.radius;
    }
  }
  return out;
}

double critical_amplitude(double width, double lambda0, double tol) {
  // Trapping appears when F'(r) first touches zero, so bisect on the sign of min F'.
  auto min_slope = [&](double amplitude) {
    ManifoldModel m = build_manifold("bump-metric", 2, {{"amplitude", amplitude}, {"width", width}});
    const RadialProfile& profile = *m.radial;
    const double E = lambda0 * lambda0;
    auto dF = [&](double r) {
      const Dual rd(r, DerivativeVec::Unit(1, 0));
      const Dual psi = profile.conformal_factor(rd);
      const Dual kinetic = E - profile.potential(rd);
      const Dual r2 = rd * rd;
      const Dual f = r2 * psi;
      return Dual(f * kinetic).derivatives()(0);
    };
    const int grid = 2000;
    const double lo = 1e-3 * width, hi = 10.0 * width;
    double best = dF(lo), arg = lo;
    for (int k = 1; k <= grid; ++k) {
      const double r = lo + (hi - lo) * k / grid;
      const double v = dF(r);
      if (v < best) {
        best = v;
        arg = r;
      }
    }
    // Golden-section polish around the grid minimum.
    const double step = (hi - lo) / grid;
    double a = std::max(lo, arg - step), b = std::min(hi, arg + step);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 80; ++it) {
      const double c = b - g * (b - a), d = a + g * (b - a);
      if (dF(c) < dF(d)) b = d;
      else a = c;
    }
    return std::min(best, dF(0.5 * (a + b)));
  };
  double lo = 0.0, hi = 1.0;
  while (!(min_slope(hi) < 0.0)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw ConvergenceError("no trapping amplitude found", hi);
  }
  while (hi - lo > tol * hi) {
    const double mid = 0.5 * (lo + hi);
    (min_slope(mid) < 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace conic
