#ifndef CONIC_NUMERICS_ODE_HPP
#define CONIC_NUMERICS_ODE_HPP

#include <functional>
#include <limits>
#include <vector>

#include "conic/types.hpp"

namespace conic::numerics {

/// Right-hand side y' = f(s, y), written into `dyds` (pre-sized by the caller).
using Rhs = std::function<void(double s, const Vec& y, Vec& dyds)>;

/// Embedded Dormand-Prince 5(4) pair with first-same-as-last reuse.
class DormandPrince45 {
 public:
  explicit DormandPrince45(Rhs rhs);

  /// Attempts one step of size `h` (may be negative) from (s, y).
  /// Writes the 5th-order solution into `y_new` and returns the scaled RMS error
  /// of the embedded 4th-order estimate; components with zero weight are excluded.
  double step(double s, const Vec& y, double h, Vec& y_new, double abs_tol, double rel_tol,
              const Vec* weights = nullptr);

  /// Marks the last attempted step as accepted so the final stage is reused.
  void accept();

  long evaluations() const { return evaluations_; }

 private:
  void eval(double s, const Vec& y, Vec& out);

  Rhs rhs_;
  Vec k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_;
  double fsal_s_ = std::numeric_limits<double>::quiet_NaN();
  Vec fsal_y_;
  Vec pending_y_;
  double pending_s_ = std::numeric_limits<double>::quiet_NaN();
  bool fsal_valid_ = false;
  long evaluations_ = 0;
};

/// Implicit midpoint rule (symplectic for Hamiltonian systems) solved by fixed-point iteration.
void implicit_midpoint_step(const Rhs& rhs, double s, const Vec& y, double h, Vec& y_new,
                            double tolerance = 1e-15, int max_iterations = 100);

/// Step-size update for an error norm from a 5th-order pair.
double next_step_size(double h, double error_norm, bool accepted);

/// Hairer-Norsett-Wanner starting step estimate.
double initial_step_size(const Rhs& rhs, double s, const Vec& y, double direction,
                         double abs_tol, double rel_tol);

struct AdaptiveOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double initial_step = 0.0;  // 0 selects automatically
  double max_step = std::numeric_limits<double>::infinity();
  double min_step = 1e-14;
  long max_steps = 5'000'000;
};

struct StepStats {
  long accepted = 0;
  long rejected = 0;
};

/// Observer called after every accepted step; `at_breakpoint` marks exact breakpoint hits.
using StepObserver = std::function<void(double s, const Vec& y, bool at_breakpoint)>;

/// Integrates from s0 to s1 (either direction), landing exactly on every breakpoint
/// strictly between them (ordered along the direction of integration) and on s1.
StepStats integrate_adaptive(const Rhs& rhs, double s0, Vec& y, double s1,
                             const AdaptiveOptions& options,
                             const std::vector<double>& breakpoints = {},
                             const StepObserver& observer = {}, const Vec* weights = nullptr);

}  // namespace conic::numerics

#endif  // CONIC_NUMERICS_ODE_HPP
