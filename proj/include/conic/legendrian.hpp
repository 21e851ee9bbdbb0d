#ifndef CONIC_LEGENDRIAN_HPP
#define CONIC_LEGENDRIAN_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "conic/flow.hpp"

namespace conic {

/// Point of the product T*X x T*X: left factor q1 = (z, zeta), right factor q2 = (z', zeta').
struct PairPoint {
  PhasePoint q1;
  PhasePoint q2;
};

/// Momentum negation (z, zeta) -> (z, -zeta), which identifies the diagonal seeds.
PhasePoint negate_momentum(const PhasePoint& p);

/// Diagonal seed over q: (q, (z, -zeta)).
PairPoint diagonal_seed(const PhasePoint& q);

/// Left flow moves q1 along the halved Hamilton field for parameter s (either sign).
/// Right flow moves q2 along the conjugated field: q2 -> negate(phi_s(negate(q2))).
PairPoint left_flow(const PairPoint& p, double s, const ManifoldModel& m, double lambda0,
                    const FlowOptions& options);
PairPoint right_flow(const PairPoint& p, double s, const ManifoldModel& m, double lambda0,
                     const FlowOptions& options);

/// Phase point after flowing `start` by parameter s. Throws DomainError if the flow stops
/// short (guard radius errors propagate).
PhasePoint flow_to(const PhasePoint& start, double s, const ManifoldModel& m, double lambda0,
                   const FlowOptions& options);

struct FlowoutOptions {
  FlowOptions flow = leaf_flow();
  bool tangents = true;
  double delta = 1e-5;          // central-difference step, relative to the local scale
  double trap_radius = 1e3;     // seeds must reach this radius both ways ...
  double trap_budget = 1e4;     // ... within this parameter budget

  static FlowOptions leaf_flow() {
    FlowOptions o;
    o.abs_tol = 1e-12;
    o.rel_tol = 1e-12;
    o.escape_radius = std::numeric_limits<double>::infinity();
    return o;
  }
};

/// Leaf point (phi_s(q), negate(phi_{s'}(q))) of the flowout of the diagonal seed over q.
struct FlowoutSample {
  PhasePoint seed;  // q, projected onto the shell
  double s = 0.0;
  double s_prime = 0.0;
  PhasePoint q1;    // with boundary views
  PhasePoint q2;
  double theta = 1.0;        // x'/x = r1/r2
  double residual1 = 0.0;    // |p(q1)| / lambda0^2
  double residual2 = 0.0;
  // 4n x (2n + 2) central-difference tangents in (z1, zeta1, z2, zeta2) coordinates,
  // one column per seed coordinate z_i, zeta_i (shell-projected) and for s, s'.
  Mat tangents;
};

struct FlowoutSet {
  std::vector<FlowoutSample> samples;
  std::vector<std::string> skipped;  // one line per trapped or invalid seed
};

/// Each seed is projected onto the energy shell, checked for escape at both ends, then
/// sampled at every (s, s') of the grid.
FlowoutSet sample_flowout(const ManifoldModel& m, double lambda0,
                          const std::vector<PhasePoint>& seeds,
                          const std::vector<std::pair<double, double>>& grid,
                          const FlowoutOptions& options = {});

/// omega = sum over both factors of d zeta ^ dz.
double product_symplectic(const Vec& u, const Vec& v, int n);

struct LagrangianReport {
  double max_residual = 0.0;  // max |omega(u, v)| / (|u| |v|)
  std::size_t pairs = 0;
  std::size_t degenerate = 0;  // tangent columns below min_norm, skipped
};

LagrangianReport check_lagrangian(const std::vector<FlowoutSample>& samples,
                                  double min_norm = 1e-8);

struct RatioReport {
  double max_defect = 0.0;  // max |x'/x - |mu'| / |mu||
  std::vector<double> defects;
  std::vector<double> min_radii;
  std::size_t used = 0;
  std::size_t excluded_small_mu = 0;
  std::size_t excluded_near = 0;  // min(r1, r2) below ratio_radius
  std::optional<double> decay_rate;  // slope of log defect against log(1 / min r)
  bool pass = false;
};

RatioReport check_boundary_ratio(const std::vector<FlowoutSample>& samples,
                                 const ManifoldModel& m, double ratio_radius = 1e3,
                                 double tolerance = 1e-3, double mu_floor = 1e-8);

struct BoundaryLeafOptions {
  FlowOptions flow = FlowoutOptions::leaf_flow();
  double reach = 1e3;      // integrate both ways out to r = reach / x0
  double tolerance = 5e-3;
};

struct BoundaryLeafReport {
  double max_defect = 0.0;     // max over samples of |lambda/lambda0 + cos s| and ||mu|/lambda0 - sin s|
  double energy_defect = 0.0;  // max |lambda^2 + |mu|^2 - (lambda0^2 - V)| / lambda0^2
  double radial_mu = 0.0;      // |mu| at the seed with lambda = -lambda0
  double s_min = 0.0;          // range of the leaf parameter covered
  double s_max = 0.0;
  std::size_t samples = 0;
  bool pass = false;
};

/// Boundary bicharacteristics through (y0, mu_hat) approximated at x = x0: the seed sits at
/// z = y0 / x0 with lambda = 0 (leaf parameter pi/2); along the trajectory the parameter is
/// pi/2 plus the great-circle angle swept by y.
BoundaryLeafReport check_boundary_leaf(const ManifoldModel& m, double lambda0, const Vec& y0,
                                       const Vec& mu_hat, double x0,
                                       const BoundaryLeafOptions& options = {});

struct PhaseMapReport {
  double max_identity_defect = 0.0;  // max |grad(f^2/2) - f grad f| / max(1, |grad(f^2/2)|)
  double max_phase_defect = 0.0;     // max |Phi_wkb - f^2/2|
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // pairs with f below the floor
};

/// Squaring rule (f, df) -> (f^2/2, f df) on f = d(z, z'), with central-difference
/// gradients in z.
PhaseMapReport check_quadratic_phase_map(const ManifoldModel& m,
                                         const std::vector<std::pair<Vec, Vec>>& pairs,
                                         double floor = 1e-2, double step = 1e-5);

struct EikonalReport {
  double max_defect = 0.0;  // max of |zeta1 - sgn lambda0 grad_z d|, |zeta2 - sgn lambda0 grad_z' d|, / lambda0
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // s = s', or past a conjugate point
};

/// On a V = 0 model the leaf momenta are lambda0 times the distance gradients, with
/// sgn = sign(s - s').
EikonalReport check_flowout_eikonal(const std::vector<FlowoutSample>& samples,
                                    const ManifoldModel& m, double lambda0, double step = 1e-6);

}  // namespace conic

#endif  // CONIC_LEGENDRIAN_HPP
