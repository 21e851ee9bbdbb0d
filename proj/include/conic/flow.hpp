#ifndef CONIC_FLOW_HPP
#define CONIC_FLOW_HPP

#include <cstdint>
#include <limits>
#include <vector>

#include "conic/geometry.hpp"

namespace conic {

enum class Direction { forward, backward };
enum class EndStatus { escaped, parameter_limit };

struct FlowOptions {
  double escape_radius = 1e3;
  double s_max = 1e6;                   // budget on |s|
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double drift_tol = 1e-8;              // relative to lambda0^2
  double max_step = std::numeric_limits<double>::infinity();
  bool symplectic = false;              // fixed-step implicit midpoint instead of DP5(4)
  double fixed_step = 1e-2;
  std::vector<double> radius_events;    // samples placed exactly where r crosses these upward
  std::vector<double> parameter_stops;  // samples placed exactly at these |s|
  double projection_tol = 1e-10;        // start is rescaled onto the shell beyond this |p|
};

struct FlowSample {
  double s = 0.0;
  Vec z;
  Vec zeta;
  double A = 0.0;  // accumulated action, dA/ds = lambda0^2 - V
};

struct FlowDiagnostics {
  double max_drift = 0.0;        // max |p| / lambda0^2 over samples
  long accepted = 0;
  long rejected = 0;
  bool projected = false;        // start was rescaled onto the shell
  double start_residual = 0.0;   // |p| at the unprojected start
  bool drift_ok = true;
};

/// Bicharacteristic of the halved Hamilton field of g^{ij} zeta zeta + V - lambda0^2:
///   dz/ds = g^{-1} zeta,  dzeta/ds = -1/2 d_z(g^{ij} zeta zeta + V),  dA/ds = lambda0^2 - V.
/// Speed is |zeta| = sqrt(lambda0^2 - V), not 1. Backward trajectories carry s <= 0.
struct Trajectory {
  double lambda0 = 1.0;
  Direction direction = Direction::forward;
  std::vector<FlowSample> samples;
  EndStatus end = EndStatus::parameter_limit;
  std::vector<double> event_radii;         // radius events that were hit, in order
  std::vector<std::size_t> event_samples;  // matching sample indices
  FlowDiagnostics diagnostics;

  bool escaped() const { return end == EndStatus::escaped; }
  const FlowSample& back() const { return samples.back(); }
};

/// Throws GuardRadiusError when the path enters the model's guard ball.
Trajectory integrate_bicharacteristic(const PhasePoint& start, const ManifoldModel& m,
                                      double lambda0, Direction direction,
                                      const FlowOptions& options = {});

/// Linearized flow along a trajectory: J(s) = d(z, zeta)(s) / d(z, zeta)(0), on the
/// trajectory's own sample grid.
struct VariationalFrame {
  std::vector<double> s;
  std::vector<Mat> J;
  std::vector<Vec> state;            // (z, zeta) re-integrated alongside J
  double max_symplectic_defect = 0.0;           // max ||J^T Omega J - Omega||
  double max_relative_symplectic_defect = 0.0;  // same, divided by max(1, ||J||^2)
};

VariationalFrame integrate_jacobi(const Trajectory& traj, const ManifoldModel& m,
                                  const FlowOptions& options = {});

/// Standard symplectic matrix [[0, I], [-I, 0]] of size 2n.
Mat symplectic_form(int n);

/// Rescales zeta so that g^{ij} zeta zeta = lambda0^2 - V. Throws DomainError in the
/// classically forbidden region or for zeta = 0 with lambda0^2 > V.
Vec project_to_shell(const ManifoldModel& m, const Vec& z, const Vec& zeta, double lambda0);

struct TrappingOptions {
  std::size_t seed_count = 1000;
  double seed_radius = 3.0;          // seeds drawn from the ball |z| <= seed_radius
  std::uint64_t seed = 0;            // offset into the low-discrepancy sequence
  unsigned jobs = 1;
  FlowOptions flow = trapping_flow();

  static FlowOptions trapping_flow() {
    FlowOptions o;
    o.s_max = 1e4;
    return o;
  }
};

struct SeedClassification {
  Vec z;
  Vec zeta;
  bool forward_escaped = false;
  bool backward_escaped = false;
  bool trapped = false;
  double max_radius = 0.0;  // over both halves, from samples
};

struct TrappingReport {
  TrappingOptions options;
  std::vector<SeedClassification> seeds;
  std::size_t trapped_count = 0;
  std::size_t skipped = 0;  // seeds in the forbidden region
};

/// Classifies seeds (Halton positions in a ball times Halton directions) as escaping at
/// both ends or trapped within budget. A seed is trapped iff either end fails to reach
/// the escape radius by s_max.
TrappingReport detect_trapping(const ManifoldModel& m, double lambda0,
                               const TrappingOptions& options = {});

/// Outer radius of the trapped set of a rotationally symmetric model, from the flow:
/// bisects the momentum direction at z0 between a trapped direction and the outward
/// radial one; near the separatrix the bounded orbit's turning radius approaches the
/// unstable circular orbit.
struct TrappedRadiusEstimate {
  double radius = 0.0;
  double separatrix_angle = 0.0;
  int bisections = 0;
};

TrappedRadiusEstimate refine_trapped_radius(const ManifoldModel& m, double lambda0,
                                            const Vec& z0, const Vec& trapped_zeta,
                                            double budget = 400.0, int bisections = 40);

}  // namespace conic

#endif  // CONIC_FLOW_HPP
