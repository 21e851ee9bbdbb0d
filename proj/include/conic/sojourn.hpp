#ifndef CONIC_SOJOURN_HPP
#define CONIC_SOJOURN_HPP

#include <optional>
#include <vector>

#include "conic/flow.hpp"

namespace conic {

/// Limits at r -> infinity are fitted as f(r) = f_inf + c_1/r + ... + c_order/r^order
/// through samples landed exactly at r = base_radius * multiple.
struct ExtrapolationSpec {
  double base_radius = 1e3;
  std::vector<double> node_multiples{1.0, 2.0, 4.0};
  int order = 2;
  double tolerance = 1e-5;
};

struct ExtrapolationReport {
  int order = 0;
  std::vector<double> radii;
  // Largest change between the order-k fit and the order-(k-1) fit on the outer nodes,
  // over nu, y and M / (1 + |M|).
  double residual = 0.0;
};

/// A grows like r, so its absolute error dominates nu; the default flow is tighter.
inline FlowOptions precise_flow() {
  FlowOptions o;
  o.abs_tol = 1e-12;
  o.rel_tol = 1e-12;
  return o;
}

struct SojournOptions {
  FlowOptions flow = precise_flow();
  ExtrapolationSpec extrapolation;
};

/// Asymptotic data of one end of a bicharacteristic.
///   forward:  nu = lim A - lambda0 r,   y = lim z/|z|,  M = lim r mu
///   backward: nu = lim -A - lambda0 r (A decreases along s < 0), same y and M.
struct SojournDatum {
  Direction direction = Direction::forward;
  Vec y;
  double nu = 0.0;
  Vec M;  // tangent to the sphere at y
  ExtrapolationReport report;
  Trajectory trajectory;
};

/// Throws TrappedError when the end does not escape, ExtrapolationError when the fit
/// residual exceeds the tolerance, DomainError when the start already lies beyond the
/// first node.
SojournDatum sojourn_limit(const PhasePoint& start, const ManifoldModel& m, double lambda0,
                           Direction direction, const SojournOptions& options = {});

SojournDatum sojourn_forward(const PhasePoint& start, const ManifoldModel& m, double lambda0,
                             const SojournOptions& options = {});

/// One bicharacteristic, both ends. y_in = -lim y(s -> -infinity), so free motion has
/// y_out = y_in. The incoming impact vector is M_backward / lambda0, in y_in's complement.
struct TotalSojourn {
  Vec y_in;
  Vec y_out;
  double tau = 0.0;
  Vec impact;
  double deflection = 0.0;  // n = 2: signed, unwrapped turning of the velocity; else the angle
  std::optional<double> sigma;  // filled by the S-matrix layer
  bool nondegenerate = false;
  SojournDatum forward;
  SojournDatum backward;
};

/// Throws ConventionError when y_in is given and the backward limit disagrees with it
/// beyond convention_tol.
TotalSojourn total_sojourn(const PhasePoint& seed, const ManifoldModel& m, double lambda0,
                           const SojournOptions& options = {},
                           const std::optional<Vec>& y_in = std::nullopt,
                           double convention_tol = 1e-6);

struct IncomingSeedOptions {
  double start_distance = 0.0;  // 0: 10 (1 + |b|), capped below the first node
  double tolerance = 1e-10;     // on |b_measured - b| + |y_measured - y_in|
  int max_iterations = 25;
};

/// Phase point whose bicharacteristic arrives from direction y_in with impact vector b
/// (b orthogonal to y_in). Newton on the seed's transverse offset and tilt, so the
/// asymptotic incoming data match to the stated tolerance in any model.
PhasePoint incoming_seed(const Vec& y_in, const Vec& impact, const ManifoldModel& m,
                         double lambda0, const SojournOptions& options = {},
                         const IncomingSeedOptions& seed_options = {});

/// incoming_seed followed by total_sojourn.
TotalSojourn scatter(const Vec& y_in, const Vec& impact, const ManifoldModel& m, double lambda0,
                     const SojournOptions& options = {},
                     const IncomingSeedOptions& seed_options = {});

/// Values and phase-space derivatives of y = z/|z| and M = |z| mu at one point.
struct AsymptoticJet {
  Vec y;
  Vec M;
  Mat dy;  // n x 2n, columns over (z, zeta)
  Mat dM;
};

AsymptoticJet asymptotic_jet(const ManifoldModel& m, const Vec& z, const Vec& zeta);

/// Orthonormal basis of the complement of a unit vector, as columns (n x (n-1)).
/// For n = 2 the single column is the counterclockwise rotation of y.
Mat complement_basis(const Vec& y);

}  // namespace conic

#endif  // CONIC_SOJOURN_HPP
