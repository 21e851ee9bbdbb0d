#include "conic/legendrian.hpp"

#include <algorithm>
#include <cmath>

#include "conic/wkb.hpp"

namespace conic {

PhasePoint negate_momentum(const PhasePoint& p) { return {p.z, -p.zeta, {}}; }

PairPoint diagonal_seed(const PhasePoint& q) { return {{q.z, q.zeta, {}}, negate_momentum(q)}; }

PhasePoint flow_to(const PhasePoint& start, double s, const ManifoldModel& m, double lambda0,
                   const FlowOptions& options) {
  if (s == 0.0) return {start.z, start.zeta, {}};
  FlowOptions o = options;
  o.s_max = std::abs(s);
  const Trajectory t = integrate_bicharacteristic(
      {start.z, start.zeta, {}}, m, lambda0, s > 0 ? Direction::forward : Direction::backward, o);
  if (std::abs(t.back().s - s) > 1e-12 * (1.0 + std::abs(s)))
    throw DomainError("flow stopped at s = " + std::to_string(t.back().s) + " before " +
                      std::to_string(s));
  return {t.back().z, t.back().zeta, {}};
}

PairPoint left_flow(const PairPoint& p, double s, const ManifoldModel& m, double lambda0,
                    const FlowOptions& options) {
  return {flow_to(p.q1, s, m, lambda0, options), p.q2};
}

PairPoint right_flow(const PairPoint& p, double s, const ManifoldModel& m, double lambda0,
                     const FlowOptions& options) {
  return {p.q1, negate_momentum(flow_to(negate_momentum(p.q2), s, m, lambda0, options))};
}

namespace {

Vec stack(const PairPoint& p) {
  const int n = static_cast<int>(p.q1.z.size());
  Vec out(4 * n);
  out << p.q1.z, p.q1.zeta, p.q2.z, p.q2.zeta;
  return out;
}

bool escapes_both_ways(const PhasePoint& q, const ManifoldModel& m, double lambda0,
                       const FlowoutOptions& options, std::string& why) {
  FlowOptions o = options.flow;
  o.escape_radius = options.trap_radius;
  o.s_max = options.trap_budget;
  for (Direction d : {Direction::forward, Direction::backward}) {
    const Trajectory t = integrate_bicharacteristic(q, m, lambda0, d, o);
    if (!t.escaped()) {
      why = std::string(d == Direction::forward ? "forward" : "backward") +
            " flow stays inside r = " + std::to_string(options.trap_radius) + " up to |s| = " +
            std::to_string(options.trap_budget);
      return false;
    }
  }
  return true;
}

}  // namespace

FlowoutSet sample_flowout(const ManifoldModel& m, double lambda0,
                          const std::vector<PhasePoint>& seeds,
                          const std::vector<std::pair<double, double>>& grid,
                          const FlowoutOptions& options) {
  const int n = m.n;
  FlowoutSet out;
  const FlowOptions& fo = options.flow;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    PhasePoint q;
    std::string why;
    try {
      q = {seeds[k].z, project_to_shell(m, seeds[k].z, seeds[k].zeta, lambda0), {}};
      if (!escapes_both_ways(q, m, lambda0, options, why)) {
        out.skipped.push_back("seed " + std::to_string(k) + ": trapped, " + why);
        continue;
      }
    } catch (const Error& e) {
      out.skipped.push_back("seed " + std::to_string(k) + ": " + e.what());
      continue;
    }

    // Leaf map (seed coordinates, s, s') -> R^{4n}.
    auto leaf = [&](const Vec& z, const Vec& zeta, double s, double sp) {
      const PairPoint seed = diagonal_seed({z, project_to_shell(m, z, zeta, lambda0), {}});
      return right_flow(left_flow(seed, s, m, lambda0, fo), sp, m, lambda0, fo);
    };

    for (const auto& [s, sp] : grid) {
      FlowoutSample sample;
      sample.seed = q;
      sample.s = s;
      sample.s_prime = sp;
      const PairPoint p = leaf(q.z, q.zeta, s, sp);
      sample.q1 = to_boundary_chart(p.q1, m);
      sample.q2 = to_boundary_chart(p.q2, m);
      sample.theta = p.q1.z.norm() / p.q2.z.norm();  // x' / x
      const double scale = lambda0 * lambda0;
      sample.residual1 = std::abs(hamiltonian_eval(p.q1, m, lambda0)) / scale;
      sample.residual2 = std::abs(hamiltonian_eval(p.q2, m, lambda0)) / scale;

      if (options.tangents) {
        sample.tangents.resize(4 * n, 2 * n + 2);
        for (int c = 0; c < 2 * n + 2; ++c) {
          double h = options.delta * std::max(1.0, std::abs(c == 2 * n ? s : sp));
          if (c < n) h = options.delta * std::max(1.0, q.z.norm());
          else if (c < 2 * n) h = options.delta * std::max(1.0, q.zeta.norm());
          auto at = [&](double sign) {
            Vec zz = q.z, ww = q.zeta;
            double a = s, b = sp;
            if (c < n) zz(c) += sign * h;
            else if (c < 2 * n) ww(c - n) += sign * h;
            else if (c == 2 * n) a += sign * h;
            else b += sign * h;
            return stack(leaf(zz, ww, a, b));
          };
          sample.tangents.col(c) = (at(1.0) - at(-1.0)) / (2.0 * h);
        }
      }
      out.samples.push_back(std::move(sample));
    }
  }
  return out;
}

double product_symplectic(const Vec& u, const Vec& v, int n) {
  double w = 0.0;
  for (int f = 0; f < 2; ++f) {
    const int z0 = 2 * n * f, p0 = z0 + n;
    for (int i = 0; i < n; ++i) w += u(p0 + i) * v(z0 + i) - u(z0 + i) * v(p0 + i);
  }
  return w;
}

LagrangianReport check_lagrangian(const std::vector<FlowoutSample>& samples, double min_norm) {
  LagrangianReport r;
  for (const FlowoutSample& s : samples) {
    const Mat& T = s.tangents;
    if (T.size() == 0) continue;
    const int n = static_cast<int>(T.rows() / 4);
    for (Eigen::Index a = 0; a < T.cols(); ++a) {
      const double na = T.col(a).norm();
      if (na < min_norm) {
        ++r.degenerate;
        continue;
      }
      for (Eigen::Index b = a + 1; b < T.cols(); ++b) {
        const double nb = T.col(b).norm();
        if (nb < min_norm) continue;
        const double w = std::abs(product_symplectic(T.col(a), T.col(b), n)) / (na * nb);
        r.max_residual = std::max(r.max_residual, w);
        ++r.pairs;
      }
    }
  }
  return r;
}

RatioReport check_boundary_ratio(const std::vector<FlowoutSample>& samples,
                                 const ManifoldModel& m, double ratio_radius, double tolerance,
                                 double mu_floor) {
  RatioReport r;
  for (const FlowoutSample& s : samples) {
    const BoundaryView& b1 = *s.q1.boundary;
    const BoundaryView& b2 = *s.q2.boundary;
    const double min_r = std::min(1.0 / b1.x, 1.0 / b2.x);
    if (min_r < ratio_radius) {
      ++r.excluded_near;
      continue;
    }
    const double mu1 = covector_norm(m, s.q1.z, b1.mu);
    const double mu2 = covector_norm(m, s.q2.z, b2.mu);
    if (mu1 < mu_floor || mu2 < mu_floor) {
      ++r.excluded_small_mu;
      continue;
    }
    const double defect = std::abs(s.theta - mu2 / mu1);
    r.defects.push_back(defect);
    r.min_radii.push_back(min_r);
    r.max_defect = std::max(r.max_defect, defect);
    ++r.used;
  }
  // Decay fit, only over defects above rounding.
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < r.defects.size(); ++i)
    if (r.defects[i] > 1e-13) {
      lx.push_back(-std::log(r.min_radii[i]));
      ly.push_back(std::log(r.defects[i]));
    }
  if (lx.size() >= 2 && *std::max_element(lx.begin(), lx.end()) >
                            *std::min_element(lx.begin(), lx.end()) + 1e-3) {
    const double k = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sx += lx[i], sy += ly[i], sxx += lx[i] * lx[i], sxy += lx[i] * ly[i];
    }
    r.decay_rate = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  }
  r.pass = r.used > 0 && r.max_defect <= tolerance;
  return r;
}

BoundaryLeafReport check_boundary_leaf(const ManifoldModel& m, double lambda0, const Vec& y0,
                                       const Vec& mu_hat, double x0,
                                       const BoundaryLeafOptions& options) {
  if (!(x0 > 0.0)) throw DomainError("boundary leaf needs x0 > 0");
  const Vec y = y0.normalized();
  const Vec z0 = y / x0;
  const Mat g = cometric(m, z0);
  // Tangent direction, g-orthogonal to dr and Euclidean-orthogonal to y for the angle.
  Vec mu = mu_hat - y * (y.dot(g * mu_hat) / y.dot(g * y));
  Vec e = mu_hat - y * y.dot(mu_hat);
  if (mu.norm() == 0.0 || e.norm() == 0.0) throw DomainError("mu_hat must not be radial");
  e.normalize();

  BoundaryLeafReport r;
  {
    const PhasePoint radial{z0, project_to_shell(m, z0, -y, lambda0), {}};
    const PhasePoint c = to_boundary_chart(radial, m);
    r.radial_mu = covector_norm(m, z0, c.boundary->mu);
  }

  const PhasePoint seed{z0, project_to_shell(m, z0, mu, lambda0), {}};
  FlowOptions o = options.flow;
  o.escape_radius = options.reach / x0;
  o.s_max = 10.0 * options.reach / (x0 * lambda0);
  r.s_min = kPi;
  r.s_max = 0.0;
  const double l2 = lambda0 * lambda0;
  for (Direction d : {Direction::forward, Direction::backward}) {
    const Trajectory t = integrate_bicharacteristic(seed, m, lambda0, d, o);
    for (const FlowSample& p : t.samples) {
      const PhasePoint c = to_boundary_chart({p.z, p.zeta, {}}, m);
      const BoundaryView& b = *c.boundary;
      const double phi = std::atan2(b.y.dot(e), b.y.dot(y));
      const double s = 0.5 * kPi + phi;
      const double mu_norm = covector_norm(m, p.z, b.mu);
      r.max_defect = std::max({r.max_defect, std::abs(b.lambda / lambda0 + std::cos(s)),
                               std::abs(mu_norm / lambda0 - std::sin(s))});
      const double energy = b.lambda * b.lambda + mu_norm * mu_norm - (l2 - potential(m, p.z));
      r.energy_defect = std::max(r.energy_defect, std::abs(energy) / l2);
      r.s_min = std::min(r.s_min, s);
      r.s_max = std::max(r.s_max, s);
      ++r.samples;
    }
  }
  r.pass = r.max_defect <= options.tolerance;
  return r;
}

PhaseMapReport check_quadratic_phase_map(const ManifoldModel& m,
                                         const std::vector<std::pair<Vec, Vec>>& pairs,
                                         double floor, double step) {
  PhaseMapReport r;
  for (const auto& [z, zp] : pairs) {
    // Cheap Euclidean pre-screen keeps shooting away from the diagonal.
    if ((z - zp).norm() < floor) {
      ++r.excluded;
      continue;
    }
    const double f = geodesic_distance(z, zp, m).d;
    if (f < floor) {
      ++r.excluded;
      continue;
    }
    const double h = step * std::max(1.0, z.norm());
    Vec grad_sq(m.n), f_grad(m.n);
    for (int i = 0; i < m.n; ++i) {
      Vec a = z, b = z;
      a(i) += h;
      b(i) -= h;
      const double fa = geodesic_distance(a, zp, m).d, fb = geodesic_distance(b, zp, m).d;
      grad_sq(i) = (0.5 * fa * fa - 0.5 * fb * fb) / (2 * h);
      f_grad(i) = f * (fa - fb) / (2 * h);
    }
    r.max_identity_defect = std::max(r.max_identity_defect,
                                     (grad_sq - f_grad).norm() / std::max(1.0, grad_sq.norm()));
    const double phase = wkb_kernel(z, zp, 1.0, m).phase;
    r.max_phase_defect = std::max(r.max_phase_defect, std::abs(phase - 0.5 * f * f));
    ++r.evaluated;
  }
  return r;
}

EikonalReport check_flowout_eikonal(const std::vector<FlowoutSample>& samples,
                                    const ManifoldModel& m, double lambda0, double step) {
  EikonalReport r;
  for (const FlowoutSample& s : samples) {
    if (s.s == s.s_prime) {
      ++r.excluded;
      continue;
    }
    const double sgn = s.s > s.s_prime ? 1.0 : -1.0;
    const Vec& z1 = s.q1.z;
    const Vec& z2 = s.q2.z;
    try {
      Vec g1(m.n), g2(m.n);
      for (int i = 0; i < m.n; ++i) {
        const double h1 = step * std::max(1.0, z1.norm()), h2 = step * std::max(1.0, z2.norm());
        Vec a = z1, b = z1, c = z2, d = z2;
        a(i) += h1;
        b(i) -= h1;
        c(i) += h2;
        d(i) -= h2;
        g1(i) = (geodesic_distance(a, z2, m).d - geodesic_distance(b, z2, m).d) / (2 * h1);
        g2(i) = (geodesic_distance(z1, c, m).d - geodesic_distance(z1, d, m).d) / (2 * h2);
      }
      const double defect = std::max((s.q1.zeta - sgn * lambda0 * g1).norm(),
                                     (s.q2.zeta - sgn * lambda0 * g2).norm()) / lambda0;
      r.max_defect = std::max(r.max_defect, defect);
      ++r.evaluated;
    } catch (const CausticError&) {
      ++r.excluded;
    }
  }
  return r;
}

}  // namespace conic
