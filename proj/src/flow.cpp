#include "conic/flow.hpp"

#include <algorithm>
#include <cmath>

#include "conic/numerics/ode.hpp"
#include "conic/numerics/parallel.hpp"
#include "conic/numerics/roots.hpp"

namespace conic {

namespace {

using numerics::DormandPrince45;

// State layout (z, zeta, B) with B = A - lambda0^2 s, which stays bounded where A grows
// with s; keeps the absolute error of A - lambda0 r small far out.
numerics::Rhs flow_rhs(const ManifoldModel& m, double lambda0) {
  const int n = m.n;
  return [&m, lambda0, n](double, const Vec& y, Vec& dy) {
    const Vec z = y.head(n);
    const Vec zeta = y.segment(n, n);
    if (m.guard_radius > 0.0 && z.norm() < m.guard_radius)
      throw GuardRadiusError("bicharacteristic entered the guard ball |z| < " +
                             std::to_string(m.guard_radius));
    const HamiltonianGradient g = hamiltonian_gradient(m, z, zeta, lambda0);
    dy.resize(2 * n + 1);
    dy.head(n) = 0.5 * g.dzeta;
    dy.segment(n, n) = -0.5 * g.dz;
    dy(2 * n) = -m.fields.potential(z);
  };
}

FlowSample make_sample(double s, const Vec& y, int n, double lambda0) {
  return {s, y.head(n), y.segment(n, n), y(2 * n) + lambda0 * lambda0 * s};
}

// Steps can be long in nearly free regions; test the chord against the guard ball too.
void check_segment(const ManifoldModel& m, const Vec& a, const Vec& b) {
  if (m.guard_radius <= 0.0) return;
  const Vec d = b - a;
  const double len2 = d.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp(-a.dot(d) / len2, 0.0, 1.0) : 0.0;
  if ((a + t * d).norm() < m.guard_radius)
    throw GuardRadiusError("bicharacteristic entered the guard ball |z| < " +
                           std::to_string(m.guard_radius));
}

double drift_of(const ManifoldModel& m, const Vec& y, int n, double lambda0) {
  return std::abs(hamiltonian(m, y.head(n), y.segment(n, n), lambda0)) / (lambda0 * lambda0);
}

}  // namespace

Mat symplectic_form(int n) {
  Mat omega = Mat::Zero(2 * n, 2 * n);
  omega.topRightCorner(n, n) = Mat::Identity(n, n);
  omega.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return omega;
}

Vec project_to_shell(const ManifoldModel& m, const Vec& z, const Vec& zeta, double lambda0) {
  const double available = lambda0 * lambda0 - m.fields.potential(z);
  if (available < 0.0) throw DomainError("start lies in the classically forbidden region");
  const double kinetic = zeta.dot(m.fields.cometric(z) * zeta);
  if (kinetic == 0.0) {
    if (available == 0.0) return zeta;
    throw DomainError("cannot project a zero covector onto the energy shell");
  }
  return zeta * std::sqrt(available / kinetic);
}

Trajectory integrate_bicharacteristic(const PhasePoint& start, const ManifoldModel& m,
                                      double lambda0, Direction direction,
                                      const FlowOptions& options) {
  const int n = m.n;
  if (start.z.size() != n || start.zeta.size() != n)
    throw DomainError("start dimension does not match the model");
  if (!(lambda0 > 0.0)) throw DomainError("lambda0 must be positive");
  if (m.guard_radius > 0.0 && start.z.norm() < m.guard_radius)
    throw GuardRadiusError("start lies inside the guard ball");

  Trajectory traj;
  traj.lambda0 = lambda0;
  traj.direction = direction;
  Vec zeta = start.zeta;
  const double residual = std::abs(hamiltonian(m, start.z, zeta, lambda0));
  traj.diagnostics.start_residual = residual;
  if (residual > options.projection_tol) {
    zeta = project_to_shell(m, start.z, zeta, lambda0);
    traj.diagnostics.projected = true;
  }

  Vec y(2 * n + 1);
  y << start.z, zeta, 0.0;
  const double sign = direction == Direction::forward ? 1.0 : -1.0;
  auto rhs = flow_rhs(m, lambda0);

  std::vector<double> radii = options.radius_events;
  radii.push_back(options.escape_radius);
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
  std::vector<bool> pending(radii.size(), true);
  std::vector<double> stops;
  for (double t : options.parameter_stops)
    if (t > 0.0 && t < options.s_max) stops.push_back(t);
  stops.push_back(options.s_max);
  std::sort(stops.begin(), stops.end());
  std::size_t next_stop = 0;

  double s = 0.0;  // |s| internally
  traj.samples.push_back(make_sample(0.0, y, n, lambda0));
  traj.diagnostics.max_drift = drift_of(m, y, n, lambda0);

  auto record = [&](const Vec& state) {
    traj.samples.push_back(make_sample(sign * s, state, n, lambda0));
    const double d = drift_of(m, state, n, lambda0);
    traj.diagnostics.max_drift = std::max(traj.diagnostics.max_drift, d);
  };

  if (start.z.norm() >= options.escape_radius && options.radius_events.empty()) {
    traj.end = EndStatus::escaped;
    return traj;
  }

  if (options.symplectic) {
    Vec y_new;
    while (true) {
      double h = options.fixed_step;
      bool at_stop = false;
      if (s + h >= stops[next_stop] - 1e-14 * stops[next_stop]) {
        h = stops[next_stop] - s;
        at_stop = true;
      }
      numerics::implicit_midpoint_step(rhs, sign * s, y, sign * h, y_new);
      check_segment(m, y.head(n), y_new.head(n));
      s = at_stop ? stops[next_stop] : s + h;
      y.swap(y_new);
      ++traj.diagnostics.accepted;
      record(y);
      if (y.head(n).norm() >= options.escape_radius) {
        traj.end = EndStatus::escaped;
        break;
      }
      if (at_stop && ++next_stop == stops.size()) {
        traj.end = EndStatus::parameter_limit;
        break;
      }
    }
    traj.diagnostics.drift_ok = traj.diagnostics.max_drift <= options.drift_tol;
    return traj;
  }

  DormandPrince45 stepper(rhs);
  double proposal = numerics::initial_step_size(rhs, 0.0, y, sign, options.abs_tol, options.rel_tol);
  proposal = std::min(proposal, options.max_step);
  Vec y_new(y.size()), y_try(y.size());
  while (true) {
    if (traj.diagnostics.accepted + traj.diagnostics.rejected > 50'000'000)
      throw ConvergenceError("step budget exhausted", s);
    const double remaining = stops[next_stop] - s;
    const bool lands = proposal >= remaining * (1.0 - 1e-12);
    double h = lands ? remaining : proposal;
    const double err =
        stepper.step(sign * s, y, sign * h, y_new, options.abs_tol, options.rel_tol);
    if (!(err <= 1.0)) {
      ++traj.diagnostics.rejected;
      proposal = std::isfinite(err) ? std::abs(numerics::next_step_size(h, err, false))
                                    : 0.25 * h;
      if (proposal < 1e-14 * (1.0 + s))
        throw ConvergenceError("step size underflow along bicharacteristic", err);
      continue;
    }
    // Land exactly on the innermost radius event crossed upward during this step.
    const double r_old = y.head(n).norm();
    const double r_new = y_new.head(n).norm();
    std::size_t hit = radii.size();
    for (std::size_t k = 0; k < radii.size(); ++k)
      if (pending[k] && r_old < radii[k] && radii[k] <= r_new) {
        hit = k;
        break;
      }
    bool at_stop = lands;
    if (hit < radii.size()) {
      const double target = radii[hit];
      if (r_new - target > 1e-13 * target) {
        double a = 0.0, fa = r_old - target, b = h, fb = r_new - target;
        int side = 0;
        for (int it = 0; it < 100; ++it) {
          const double c = b - fb * (b - a) / (fb - fa);
          stepper.step(sign * s, y, sign * c, y_try, options.abs_tol, options.rel_tol);
          const double fc = y_try.head(n).norm() - target;
          if (std::abs(fc) <= 1e-13 * target) {
            h = c;
            break;
          }
          if ((fc > 0.0) == (fb > 0.0)) {
            b = c;
            fb = fc;
            if (side == 1) fa *= 0.5;
            side = 1;
          } else {
            a = c;
            fa = fc;
            if (side == -1) fb *= 0.5;
            side = -1;
          }
          h = c;
        }
        y_new = y_try;
        at_stop = false;
      }
    }
    check_segment(m, y.head(n), y_new.head(n));
    stepper.accept();
    s = at_stop ? stops[next_stop] : s + h;
    y.swap(y_new);
    ++traj.diagnostics.accepted;
    record(y);
    if (hit < radii.size()) {
      pending[hit] = false;
      traj.event_radii.push_back(radii[hit]);
      traj.event_samples.push_back(traj.samples.size() - 1);
      if (radii[hit] == options.escape_radius) {
        traj.end = EndStatus::escaped;
        break;
      }
    }
    const double grown = std::abs(numerics::next_step_size(h, err, true));
    proposal = std::min(lands ? std::max(proposal, grown) : grown, options.max_step);
    if (at_stop && ++next_stop == stops.size()) {
      traj.end = EndStatus::parameter_limit;
      break;
    }
  }
  traj.diagnostics.drift_ok = traj.diagnostics.max_drift <= options.drift_tol;
  return traj;
}

VariationalFrame integrate_jacobi(const Trajectory& traj, const ManifoldModel& m,
                                  const FlowOptions& options) {
  const int n = m.n;
  const int dim = 2 * n;
  const double lambda0 = traj.lambda0;
  if (traj.samples.empty()) throw DomainError("empty trajectory");
  auto base = flow_rhs(m, lambda0);
  numerics::Rhs rhs = [&](double s, const Vec& y, Vec& dy) {
    Vec head = y.head(dim + 1);
    Vec dhead(dim + 1);
    base(s, head, dhead);
    Mat hess;
    try {
      hess = hamiltonian_hessian(m, y.head(n), y.segment(n, n));
    } catch (const DerivativeError& e) {
      throw DerivativeError(std::string("second derivatives failed at s = ") +
                            std::to_string(s) + ": " + e.what());
    }
    Mat a(dim, dim);
    a.topRows(n) = 0.5 * hess.bottomRows(n);
    a.bottomRows(n) = -0.5 * hess.topRows(n);
    const Eigen::Map<const Mat> j(y.data() + dim + 1, dim, dim);
    dy.resize(y.size());
    dy.head(dim + 1) = dhead;
    Eigen::Map<Mat>(dy.data() + dim + 1, dim, dim) = a * j;
  };

  Vec y(dim + 1 + dim * dim);
  const FlowSample& first = traj.samples.front();
  y.head(n) = first.z;
  y.segment(n, n) = first.zeta;
  y(dim) = first.A - lambda0 * lambda0 * first.s;
  Eigen::Map<Mat>(y.data() + dim + 1, dim, dim).setIdentity();

  VariationalFrame frame;
  const Mat omega = symplectic_form(n);
  auto store = [&](double s, const Vec& state) {
    const Eigen::Map<const Mat> j(state.data() + dim + 1, dim, dim);
    frame.s.push_back(s);
    frame.J.emplace_back(j);
    frame.state.push_back(state.head(dim));
    const double defect = (j.transpose() * omega * j - omega).norm();
    frame.max_symplectic_defect = std::max(frame.max_symplectic_defect, defect);
    frame.max_relative_symplectic_defect = std::max(
        frame.max_relative_symplectic_defect, defect / std::max(1.0, j.squaredNorm()));
  };
  store(first.s, y);
  if (traj.samples.size() == 1) return frame;

  std::vector<double> breakpoints;
  for (std::size_t i = 1; i + 1 < traj.samples.size(); ++i)
    breakpoints.push_back(traj.samples[i].s);
  numerics::AdaptiveOptions adaptive;
  adaptive.abs_tol = options.abs_tol;
  adaptive.rel_tol = options.rel_tol;
  numerics::integrate_adaptive(
      rhs, first.s, y, traj.samples.back().s, adaptive, breakpoints,
      [&](double s, const Vec& state, bool at_breakpoint) {
        if (at_breakpoint) store(s, state);
      });
  return frame;
}

TrappingReport detect_trapping(const ManifoldModel& m, double lambda0,
                               const TrappingOptions& options) {
  const int n = m.n;
  TrappingReport report;
  report.options = options;
  report.seeds.resize(options.seed_count);
  std::vector<bool> skipped(options.seed_count, false);
  numerics::parallel_for(options.seed_count, options.jobs, [&](std::size_t i) {
    const std::uint64_t index = options.seed + i + 1;
    // Halton coordinates: n for the position direction, one for the radius, n for the
    // momentum direction.
    auto halton = [index](int k) {
      return numerics::radical_inverse(index, numerics::nth_prime(static_cast<unsigned>(k)));
    };
    Vec z(n), d(n);
    for (int k = 0; k < n; ++k) {
      z(k) = 2.0 * halton(k) - 1.0;
      d(k) = 2.0 * halton(n + 1 + k) - 1.0;
    }
    if (z.norm() < 1e-12) z = Vec::Unit(n, 0);
    if (d.norm() < 1e-12) d = Vec::Unit(n, 1);
    z *= options.seed_radius * std::pow(halton(n), 1.0 / n) / z.norm();
    d.normalize();
    const double floor = 2.0 * m.guard_radius;
    if (z.norm() < floor) z *= floor / std::max(z.norm(), 1e-300);
    SeedClassification& c = report.seeds[i];
    c.z = z;
    try {
      c.zeta = project_to_shell(m, z, d, lambda0);
    } catch (const DomainError&) {
      skipped[i] = true;
      c.zeta = d;
      return;
    }
    PhasePoint start{z, c.zeta, {}};
    for (Direction dir : {Direction::forward, Direction::backward}) {
      const Trajectory t = integrate_bicharacteristic(start, m, lambda0, dir, options.flow);
      for (const FlowSample& smp : t.samples) c.max_radius = std::max(c.max_radius, smp.z.norm());
      (dir == Direction::forward ? c.forward_escaped : c.backward_escaped) = t.escaped();
    }
    c.trapped = !(c.forward_escaped && c.backward_escaped);
  });
  for (std::size_t i = 0; i < report.seeds.size(); ++i) {
    if (skipped[i]) ++report.skipped;
    else if (report.seeds[i].trapped) ++report.trapped_count;
  }
  return report;
}

TrappedRadiusEstimate refine_trapped_radius(const ManifoldModel& m, double lambda0,
                                            const Vec& z0, const Vec& trapped_zeta,
                                            double budget, int bisections) {
  const Vec radial = z0.normalized();
  Vec tangent = trapped_zeta - trapped_zeta.dot(radial) * radial;
  if (tangent.norm() < 1e-12) throw DomainError("trapped direction is purely radial");
  tangent.normalize();
  const double trapped_angle = std::atan2(trapped_zeta.dot(tangent), trapped_zeta.dot(radial));

  FlowOptions opts;
  opts.escape_radius = 10.0 * (1.0 + z0.norm());
  opts.s_max = budget;
  // Returns the first outer turning radius (radial velocity going from + to -), or a
  // negative value without a turn: -1 escaped, -2 still inside at the budget. The latter
  // counts as escaping in the bisection, since near the separatrix orbits drift out slowly.
  auto probe = [&](double angle) {
    Vec zeta = std::cos(angle) * radial + std::sin(angle) * tangent;
    zeta = project_to_shell(m, z0, zeta, lambda0);
    const Trajectory t =
        integrate_bicharacteristic(PhasePoint{z0, zeta, {}}, m, lambda0, Direction::forward, opts);
    auto rdot = [&](std::size_t k) {
      const FlowSample& p = t.samples[k];
      return p.z.dot(cometric(m, p.z) * p.zeta);
    };
    std::size_t arg = 0;
    for (std::size_t k = 1; k < t.samples.size(); ++k)
      if (rdot(k - 1) > 0.0 && rdot(k) <= 0.0) {
        arg = rdot(k - 1) > -rdot(k) ? k : k - 1;
        break;
      }
    if (arg == 0) return t.escaped() ? -1.0 : -2.0;
    double best = t.samples[arg].z.norm();
    // Parabolic refinement of the turning radius through three samples.
    if (arg + 1 < t.samples.size()) {
      const double s0 = t.samples[arg - 1].s, s1 = t.samples[arg].s, s2 = t.samples[arg + 1].s;
      const double r0 = t.samples[arg - 1].z.norm(), r2 = t.samples[arg + 1].z.norm();
      const double d01 = (best - r0) / (s1 - s0), d12 = (r2 - best) / (s2 - s1);
      const double curv = (d12 - d01) / (s2 - s0);
      if (curv < 0.0) {
        const double slope = d01 + curv * (s1 - s0);
        best -= slope * slope / (4.0 * curv);
      }
    }
    return best;
  };

  double lo = trapped_angle, hi = 0.0;  // lo trapped, hi escapes
  double radius = probe(lo);
  if (radius == -1.0) throw DomainError("seed direction is not trapped within the budget");
  if (probe(hi) >= 0.0) throw DomainError("radial direction does not escape within the budget");
  TrappedRadiusEstimate est;
  for (int it = 0; it < bisections; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = probe(mid);
    if (r >= 0.0) {
      lo = mid;
      radius = r;
    } else {
      hi = mid;
    }
    ++est.bisections;
  }
  if (!(radius >= 0.0)) throw DomainError("no outer turning point found near the separatrix");
  est.radius = radius;
  est.separatrix_angle = 0.5 * (lo + hi);
  return est;
}

}  // namespace conic
