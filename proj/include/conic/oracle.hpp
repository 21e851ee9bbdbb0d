#ifndef CONIC_ORACLE_HPP
#define CONIC_ORACLE_HPP

#include <functional>
#include <vector>

#include "conic/geometry.hpp"

namespace conic {

// ---------------------------------------------------------------------------
// Euclidean kernels

/// (1 / (4 pi h^2)) e^{i lambda0 |z - z'| / h} / |z - z'| on R^3.
/// Throws DomainError on the diagonal or for h <= 0; only n = 3 is available.
Complex free_resolvent(const Vec& z, const Vec& zp, double h, double lambda0 = 1.0, int n = 3);

/// (2 pi i t)^{-n/2} e^{i |z - z'|^2 / 2t}, with i^{-n/2} = e^{-i pi n / 4}.
Complex free_propagator(const Vec& z, const Vec& zp, double t);

/// c_n e^{-i lambda y'.z}.
Complex free_poisson(double lambda, const Vec& z, const Vec& yp, double c_n = 1.0);

// ---------------------------------------------------------------------------
// Central potentials V = V(r) on flat space

/// Deflection angle pi (1 - J / sqrt(J^2 + c)) for V = c / r^2, J = lambda0 b.
double inverse_square_deflection(double b, double c, double lambda0);

/// Total sojourn time -pi c / sqrt(J^2 + c) for V = c / r^2.
double inverse_square_sojourn(double b, double c, double lambda0);

struct RadialQuadratureSpec {
  std::function<double(double)> potential;  // V(r)
  double energy = 1.0;                      // E = lambda0^2
  double J = 1.0;                           // angular momentum lambda0 b
  double abs_tol = 1e-15;
  double rel_tol = 1e-12;
};

struct RadialQuadratureResult {
  double deflection = 0.0;  // Theta = pi - 2 int (J / r^2) / sqrt(W) dr
  double sojourn = 0.0;     // tau = 2 lim [int (E - V) / sqrt(W) dr - lambda0 R]
  double turning_radius = 0.0;
  double error = 0.0;       // quadrature error estimates, summed
  int evaluations = 0;
};

/// Outermost zero of W(r) = E - V(r) - J^2 / r^2, bracketed before refinement.
/// Throws DomainError when no turning point exists.
double turning_radius(const RadialQuadratureSpec& spec);

/// Orbit integrals with the substitution r = r_min / cos u and adaptive Gauss-Kronrod.
RadialQuadratureResult central_scattering(const RadialQuadratureSpec& spec);

double central_deflection(double b, const std::function<double(double)>& V, double lambda0);
double central_sojourn(double b, const std::function<double(double)>& V, double lambda0);

// ---------------------------------------------------------------------------
// Trapping in rotationally symmetric models

/// Circular orbit: critical point of F(r) = r^2 psi(r) (E - V(r)), where turning points
/// of an orbit with angular momentum J solve F(r) = J^2.
struct CircularOrbit {
  double radius = 0.0;
  double angular_momentum = 0.0;
  bool stable = false;  // local maximum of F
};

struct TrappingOracle {
  std::vector<CircularOrbit> orbits;
  bool trapping = false;
  double inner_radius = 0.0;  // trapped annulus [inner, outer]
  double outer_radius = 0.0;  // radius of the unstable circular orbit bounding the pocket
};

/// Scans F on a logarithmic grid in [r_lo, r_hi], refines critical points by Brent's method.
/// Throws DomainError unless the model is rotationally symmetric.
TrappingOracle effective_potential_trapping(const ManifoldModel& m, double lambda0,
                                            double r_lo = 1e-3, double r_hi = 1e3,
                                            int grid = 4000);

/// Smallest bump amplitude producing trapping, by bisection on the oracle.
double critical_amplitude(double width, double lambda0, double tol = 1e-12);

}  // namespace conic

#endif  // CONIC_ORACLE_HPP
