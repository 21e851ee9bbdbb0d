#include "conic/sojourn.hpp"

#include <algorithm>
#include <cmath>

#include "conic/numerics/extrapolation.hpp"

namespace conic {

namespace {

double wrapped_angle(const Vec& from, const Vec& to) {
  return std::atan2(from(0) * to(1) - from(1) * to(0), from.dot(to));
}

std::vector<double> node_radii(const ExtrapolationSpec& spec) {
  if (!(spec.base_radius > 0.0)) throw DomainError("extrapolation base radius must be positive");
  if (spec.order < 1) throw DomainError("extrapolation order must be at least 1");
  std::vector<double> radii;
  for (double k : spec.node_multiples) radii.push_back(spec.base_radius * k);
  std::sort(radii.begin(), radii.end());
  if (radii.size() < static_cast<std::size_t>(spec.order) + 1 || radii.front() <= 0.0)
    throw DomainError("extrapolation needs order + 1 positive nodes");
  return radii;
}

// Dual quantities built from constants carry empty derivative vectors; give them the
// full size before they meet expression templates.
void make_sized(MatT<Dual>& g, int size) {
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g(i).derivatives().size() == 0) g(i).derivatives() = DerivativeVec::Zero(size);
}

}  // namespace

Mat complement_basis(const Vec& y) {
  const Eigen::Index n = y.size();
  if (n == 2) {
    Mat e(2, 1);
    e << -y(1), y(0);
    return e;
  }
  // Householder reflection taking y to e_0; its remaining columns span y's complement.
  Eigen::HouseholderQR<Mat> qr(y);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  return q.rightCols(n - 1);
}

AsymptoticJet asymptotic_jet(const ManifoldModel& m, const Vec& z, const Vec& zeta) {
  const int n = m.n, d = 2 * n;
  AsymptoticJet jet;
  if (m.dual_fields) {
    VecT<Dual> zd(n), kd(n);
    for (int i = 0; i < n; ++i) {
      zd(i) = Dual(z(i), DerivativeVec::Unit(d, i));
      kd(i) = Dual(zeta(i), DerivativeVec::Unit(d, n + i));
    }
    MatT<Dual> g = m.dual_fields.cometric(zd);
    make_sized(g, d);
    Dual x, lambda;
    VecT<Dual> y, mu;
    boundary_split<Dual>(zd, kd, g, x, y, lambda, mu);
    jet.y.resize(n);
    jet.M.resize(n);
    jet.dy.resize(n, d);
    jet.dM.resize(n, d);
    for (int i = 0; i < n; ++i) {
      const Dual Mi = mu(i) / x;
      jet.y(i) = y(i).value();
      jet.M(i) = Mi.value();
      jet.dy.row(i) = y(i).derivatives().transpose();
      jet.dM.row(i) = Mi.derivatives().transpose();
    }
    return jet;
  }
  auto eval = [&](const Vec& q, Vec& y, Vec& M) {
    double x, lambda;
    Vec mu;
    boundary_split<double>(q.head(n), q.tail(n), m.fields.cometric(q.head(n)), x, y, lambda, mu);
    M = mu / x;
  };
  Vec q(d);
  q << z, zeta;
  eval(q, jet.y, jet.M);
  jet.dy.resize(n, d);
  jet.dM.resize(n, d);
  for (int j = 0; j < d; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(q(j)));
    Vec qp = q, qm = q, yp, ym, Mp, Mm;
    qp(j) += h;
    qm(j) -= h;
    eval(qp, yp, Mp);
    eval(qm, ym, Mm);
    jet.dy.col(j) = (yp - ym) / (2.0 * h);
    jet.dM.col(j) = (Mp - Mm) / (2.0 * h);
  }
  return jet;
}

SojournDatum sojourn_limit(const PhasePoint& start, const ManifoldModel& m, double lambda0,
                           Direction direction, const SojournOptions& options) {
  const ExtrapolationSpec& spec = options.extrapolation;
  const std::vector<double> radii = node_radii(spec);
  if (start.z.size() == m.n && start.z.norm() >= radii.front())
    throw DomainError("start lies beyond the first extrapolation node r = " +
                      std::to_string(radii.front()));
  FlowOptions flow = options.flow;
  flow.radius_events = radii;
  flow.escape_radius = radii.back();

  SojournDatum out;
  out.direction = direction;
  out.trajectory = integrate_bicharacteristic(start, m, lambda0, direction, flow);
  const Trajectory& t = out.trajectory;
  if (!t.escaped())
    throw TrappedError("bicharacteristic did not reach r = " + std::to_string(radii.back()) +
                       " within |s| <= " + std::to_string(flow.s_max));

  const double sign = direction == Direction::forward ? 1.0 : -1.0;
  std::vector<double> nu, r;
  std::vector<Vec> y, M;
  for (double radius : radii) {
    const auto it = std::find(t.event_radii.begin(), t.event_radii.end(), radius);
    if (it == t.event_radii.end())
      throw DomainError("trajectory never crossed the node r = " + std::to_string(radius));
    const FlowSample& p = t.samples[t.event_samples[it - t.event_radii.begin()]];
    const double rk = p.z.norm();
    double x, lambda;
    Vec yk, mu;
    boundary_split<double>(p.z, p.zeta, m.fields.cometric(p.z), x, yk, lambda, mu);
    r.push_back(rk);
    // A - z.zeta has the same limit as A - lambda0 r (their difference is ~ |M|^2 / 2 lambda0 r)
    // but is constant on straight lines, so the 1/r fit starts from a much smaller tail.
    nu.push_back(sign * (p.A - p.z.dot(p.zeta)));
    y.push_back(yk);
    M.push_back(mu * rk);
  }

  const int k = spec.order;
  out.nu = numerics::limit_in_inverse_radius(r, nu, k).limit;
  Vec y_lim = numerics::limit_in_inverse_radius(r, y, k);
  Vec M_lim = numerics::limit_in_inverse_radius(r, M, k);

  // Residual against the next-lower order fitted on the outer nodes.
  const std::size_t skip = r.size() - static_cast<std::size_t>(k);
  const std::span<const double> outer(r.data() + skip, r.size() - skip);
  const std::vector<double> nu_outer(nu.begin() + skip, nu.end());
  const std::vector<Vec> y_outer(y.begin() + skip, y.end()), M_outer(M.begin() + skip, M.end());
  double residual = 0.0;
  if (k >= 1) {
    const double nu_low = numerics::limit_in_inverse_radius(outer, nu_outer, k - 1).limit;
    const Vec y_low = numerics::limit_in_inverse_radius(outer, y_outer, k - 1);
    const Vec M_low = numerics::limit_in_inverse_radius(outer, M_outer, k - 1);
    residual = std::max({std::abs(out.nu - nu_low), (y_lim - y_low).norm(),
                         (M_lim - M_low).norm() / (1.0 + M_lim.norm())});
  }
  out.report = {k, radii, residual};
  if (!(residual <= spec.tolerance))
    throw ExtrapolationError("sojourn extrapolation residual " + std::to_string(residual) +
                                 " exceeds " + std::to_string(spec.tolerance),
                             residual);

  out.y = y_lim.normalized();
  out.M = M_lim - out.y * out.y.dot(M_lim);
  return out;
}

SojournDatum sojourn_forward(const PhasePoint& start, const ManifoldModel& m, double lambda0,
                             const SojournOptions& options) {
  return sojourn_limit(start, m, lambda0, Direction::forward, options);
}

TotalSojourn total_sojourn(const PhasePoint& seed, const ManifoldModel& m, double lambda0,
                           const SojournOptions& options, const std::optional<Vec>& y_in,
                           double convention_tol) {
  TotalSojourn out;
  out.forward = sojourn_limit(seed, m, lambda0, Direction::forward, options);
  out.backward = sojourn_limit(seed, m, lambda0, Direction::backward, options);
  out.y_out = out.forward.y;
  out.y_in = -out.backward.y;
  out.tau = out.forward.nu + out.backward.nu;
  out.impact = out.backward.M / lambda0;

  if (y_in) {
    const double mismatch = (*y_in - out.y_in).norm();
    if (mismatch > convention_tol)
      throw ConventionError("incoming direction mismatch " + std::to_string(mismatch) +
                            "; y_in is minus the backward limit of z/|z|, check the sign of "
                            "the requested direction");
  }

  if (m.n == 2) {
    // Continuous turning of the velocity g^{-1} zeta, from the incoming asymptote out.
    const std::vector<FlowSample>& bwd = out.backward.trajectory.samples;
    const std::vector<FlowSample>& fwd = out.forward.trajectory.samples;
    auto velocity = [&](const FlowSample& p) { return Vec(m.fields.cometric(p.z) * p.zeta); };
    double turning = wrapped_angle(out.y_in, velocity(bwd.back()));
    Vec previous = velocity(bwd.back());
    for (auto it = bwd.rbegin() + 1; it != bwd.rend(); ++it) {
      const Vec v = velocity(*it);
      turning += wrapped_angle(previous, v);
      previous = v;
    }
    for (std::size_t k = 1; k < fwd.size(); ++k) {
      const Vec v = velocity(fwd[k]);
      turning += wrapped_angle(previous, v);
      previous = v;
    }
    out.deflection = turning + wrapped_angle(previous, out.y_out);
  } else {
    out.deflection = std::acos(std::clamp(out.y_in.dot(out.y_out), -1.0, 1.0));
  }
  return out;
}

PhasePoint incoming_seed(const Vec& y_in, const Vec& impact, const ManifoldModel& m,
                         double lambda0, const SojournOptions& options,
                         const IncomingSeedOptions& seed_options) {
  const int n = m.n;
  if (y_in.size() != n || impact.size() != n) throw DomainError("dimension mismatch");
  if (std::abs(y_in.norm() - 1.0) > 1e-12) throw DomainError("y_in must be a unit vector");
  if (std::abs(impact.dot(y_in)) > 1e-9 * (1.0 + impact.norm()))
    throw DomainError("impact vector must be orthogonal to y_in");

  const Mat E = complement_basis(y_in);
  const double first_node = node_radii(options.extrapolation).front();
  double L = seed_options.start_distance > 0.0 ? seed_options.start_distance
                                               : 10.0 * (1.0 + impact.norm());
  L = std::min(L, 0.5 * first_node);
  const Vec b = E.transpose() * impact;
  const int k = n - 1;

  auto seed_of = [&](const Vec& u) {
    PhasePoint p;
    p.z = -L * y_in + E * u.head(k);
    p.zeta = project_to_shell(m, p.z, y_in + E * u.tail(k), lambda0);
    return p;
  };
  auto residual_of = [&](const Vec& u) {
    const SojournDatum back = sojourn_limit(seed_of(u), m, lambda0, Direction::backward, options);
    Vec res(2 * k);
    res.head(k) = E.transpose() * (back.M / lambda0) - b;
    res.tail(k) = E.transpose() * (-back.y);
    return res;
  };

  Vec u = Vec::Zero(2 * k);
  u.head(k) = b;
  Vec res = residual_of(u);
  double best = res.norm();
  for (int it = 0; it < seed_options.max_iterations && best > seed_options.tolerance; ++it) {
    Mat jac(2 * k, 2 * k);
    for (int j = 0; j < 2 * k; ++j) {
      const double h = j < k ? 1e-6 * (1.0 + b.norm()) : 1e-6;
      Vec up = u, um = u;
      up(j) += h;
      um(j) -= h;
      jac.col(j) = (residual_of(up) - residual_of(um)) / (2.0 * h);
    }
    const Vec step = jac.colPivHouseholderQr().solve(res);
    // Backtrack when a full step does not reduce the residual.
    double scale = 1.0;
    Vec trial = u - step;
    Vec trial_res = residual_of(trial);
    while (trial_res.norm() >= best && scale > 1.0 / 64.0) {
      scale *= 0.5;
      trial = u - scale * step;
      trial_res = residual_of(trial);
    }
    if (trial_res.norm() >= best) break;
    u = trial;
    res = trial_res;
    best = res.norm();
  }
  if (best > 100.0 * seed_options.tolerance)
    throw ConvergenceError("incoming seed did not match (y_in, b); residual " +
                               std::to_string(best),
                           best);
  return seed_of(u);
}

TotalSojourn scatter(const Vec& y_in, const Vec& impact, const ManifoldModel& m, double lambda0,
                     const SojournOptions& options, const IncomingSeedOptions& seed_options) {
  const PhasePoint seed = incoming_seed(y_in, impact, m, lambda0, options, seed_options);
  return total_sojourn(seed, m, lambda0, options, y_in, 1e-6);
}

}  // namespace conic
