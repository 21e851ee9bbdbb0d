#ifndef CONIC_WKB_HPP
#define CONIC_WKB_HPP

#include <functional>
#include <optional>

#include "conic/flow.hpp"

namespace conic {

struct ShootingOptions {
  double tolerance = 1e-13;  // on |z(1) - z| / (1 + |z|)
  int max_iterations = 50;
  FlowOptions flow = shooting_flow();

  static FlowOptions shooting_flow() {
    FlowOptions o;
    o.abs_tol = 1e-13;
    o.rel_tol = 1e-13;
    o.escape_radius = std::numeric_limits<double>::infinity();
    o.projection_tol = std::numeric_limits<double>::infinity();
    return o;
  }
};

/// Geodesic of the metric (V ignored) from z' to z, parametrized on [0, 1] with constant
/// speed d: the flow started at (z', w) reaches z at s = 1, and d = |w|_g.
struct ConnectingPath {
  Vec w;                 // initial covector at z'
  Trajectory trajectory;
  VariationalFrame frame;
  double conjugate_margin = 0.0;  // min det J_{z zeta}(s) / s^n over s in (0, 1]
  int iterations = 0;
  double residual = 0.0;
};

struct DistanceResult {
  double d = 0.0;
  ConnectingPath path;
};

/// Throws ConvergenceError (with the last residual) when shooting fails and CausticError
/// when the Jacobi determinant det dz/dw changes sign before z.
DistanceResult geodesic_distance(const Vec& z, const Vec& zp, const ManifoldModel& m,
                                 const ShootingOptions& options = {});

struct AmplitudeOptions {
  ShootingOptions shooting;
  bool include_potential = true;  // V enters the a1 source as -i V
  int quadrature_points = 8;      // Gauss-Legendre nodes along the geodesic for a1
  double stencil_step = 1e-3;     // finite-difference step for the Laplacian of a0
};

struct Amplitude {
  double a0 = 1.0;
  std::optional<Complex> a1;
  double d = 0.0;
};

/// a0 = [sqrt(det G(z) det G(z')) det(dz/dw)]^{-1/2}: the van Vleck half-density, with
/// a0(z', z') = 1. With order 1, a1 = a0 i int_0^1 (L a0 / (2 a0) - V)(gamma(s)) ds,
/// L the Laplace-Beltrami operator in the first argument, by a finite-difference stencil.
Amplitude wkb_amplitude(const Vec& z, const Vec& zp, const ManifoldModel& m, int order = 0,
                        const AmplitudeOptions& options = {});

/// Laplace-Beltrami operator of a scalar function at z by central differences.
double laplace_beltrami(const std::function<double(const Vec&)>& f, const Vec& z,
                        const ManifoldModel& m, double step);

struct WkbKernelSample {
  Vec z;
  Vec zp;
  double t = 0.0;
  double phase = 0.0;  // d^2 / 2
  double a0 = 1.0;
  std::optional<Complex> a1;
  bool caustic = false;
  int order = 0;
  Complex value;
};

/// (2 pi i t)^{-n/2} e^{i Phi / t} (a0 + t a1), branch i^{-n/2} = e^{-i pi n / 4}.
/// Throws DomainError for t <= 0 and CausticError past a conjugate point.
WkbKernelSample wkb_kernel(const Vec& z, const Vec& zp, double t, const ManifoldModel& m,
                           int order = 0, const AmplitudeOptions& options = {});

/// Kernel value from a precomputed amplitude, for scanning t at fixed (z, z').
Complex wkb_kernel_value(const Amplitude& a, double t, int n, int order);

/// Half the distance to the nearest conjugate point of z' over `directions` initial
/// directions, capped by the model's injectivity bound and by max_length.
double region_radius(const Vec& zp, const ManifoldModel& m, int directions = 16,
                     double max_length = 20.0);

}  // namespace conic

#endif  // CONIC_WKB_HPP
