#include "conic/wkb.hpp"

#include <algorithm>
#include <cmath>

#include "conic/numerics/quadrature.hpp"
#include "conic/numerics/roots.hpp"

namespace conic {

namespace {

Mat jacobi_block(const Mat& J, int n) { return J.block(0, n, n, n); }

// Unit-interval flow from (zp, w) with samples at `stops` (and the DP steps in between).
Trajectory unit_flow(const Vec& zp, const Vec& w, const ManifoldModel& free,
                     const FlowOptions& base, std::vector<double> stops) {
  FlowOptions o = base;
  o.s_max = 1.0;
  o.parameter_stops = std::move(stops);
  const double speed = std::sqrt(w.dot(free.fields.cometric(zp) * w));
  return integrate_bicharacteristic({zp, w, {}}, free, speed, Direction::forward, o);
}

std::vector<double> uniform_stops(int count) {
  std::vector<double> s;
  for (int k = 1; k < count; ++k) s.push_back(static_cast<double>(k) / count);
  return s;
}

ConnectingPath shoot(const Vec& z, const Vec& zp, const ManifoldModel& free,
                     const ShootingOptions& options) {
  const int n = free.n;
  ConnectingPath path;
  path.w = metric(free, zp) * (z - zp);
  const double scale = 1.0 + z.norm();
  double residual = std::numeric_limits<double>::infinity();
  Mat jac;
  for (int it = 0; it <= options.max_iterations; ++it) {
    path.trajectory = unit_flow(zp, path.w, free, options.flow, uniform_stops(32));
    Vec miss = path.trajectory.back().z - z;
    residual = miss.norm() / scale;
    path.iterations = it;
    path.residual = residual;
    if (residual <= options.tolerance) break;
    path.frame = integrate_jacobi(path.trajectory, free, options.flow);
    jac = jacobi_block(path.frame.J.back(), n);
    const Vec step = jac.partialPivLu().solve(miss);
    // Halve the step until the endpoint miss shrinks.
    Vec trial = path.w - step;
    for (int k = 0; k < 20; ++k) {
      const Trajectory t = unit_flow(zp, trial, free, options.flow, {});
      if ((t.back().z - z).norm() / scale < residual) break;
      trial = path.w - std::ldexp(1.0, -(k + 1)) * step;
    }
    path.w = trial;
  }
  if (!(residual <= options.tolerance))
    throw ConvergenceError("geodesic shooting did not converge; residual " +
                               std::to_string(residual),
                           residual);
  path.frame = integrate_jacobi(path.trajectory, free, options.flow);

  // Conjugate points: det dz/dw(s) / s^n starts at det g^{-1}(z') > 0 and must stay positive.
  path.conjugate_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < path.frame.J.size(); ++k) {
    const double s = path.frame.s[k];
    const double det = jacobi_block(path.frame.J[k], n).determinant() / std::pow(s, n);
    path.conjugate_margin = std::min(path.conjugate_margin, det);
  }
  if (!(path.conjugate_margin > 0.0))
    throw CausticError("conjugate point along the geodesic from z' to z: det dz/dw = " +
                       std::to_string(path.conjugate_margin) + " s^n");
  return path;
}

double van_vleck(const Vec& z, const Vec& zp, const ManifoldModel& free, const ConnectingPath& p) {
  const int n = free.n;
  const double det_jac = jacobi_block(p.frame.J.back(), n).determinant();
  // det G = 1 / det g^{-1}
  const double det_metrics = 1.0 / (cometric(free, z).determinant() * cometric(free, zp).determinant());
  const double v = std::sqrt(det_metrics) * det_jac;
  if (!(v > 0.0)) throw CausticError("vanishing Jacobi determinant");
  return 1.0 / std::sqrt(v);
}

double amplitude_a0(const Vec& z, const Vec& zp, const ManifoldModel& free,
                    const ShootingOptions& options) {
  if ((z - zp).norm() == 0.0) return 1.0;
  return van_vleck(z, zp, free, shoot(z, zp, free, options));
}

}  // namespace

DistanceResult geodesic_distance(const Vec& z, const Vec& zp, const ManifoldModel& m,
                                 const ShootingOptions& options) {
  if (z.size() != m.n || zp.size() != m.n) throw DomainError("dimension mismatch");
  DistanceResult out;
  if ((z - zp).norm() == 0.0) {
    out.path.w = Vec::Zero(m.n);
    return out;
  }
  const ManifoldModel free = without_potential(m);
  out.path = shoot(z, zp, free, options);
  out.d = std::sqrt(out.path.w.dot(cometric(free, zp) * out.path.w));
  return out;
}

double laplace_beltrami(const std::function<double(const Vec&)>& f, const Vec& z,
                        const ManifoldModel& m, double step) {
  const int n = m.n;
  const double h = step;
  const Mat g = cometric(m, z);
  auto volume = [&](const Vec& x) { return 1.0 / std::sqrt(cometric(m, x).determinant()); };

  // Drift b^j = (1/sqrt G) d_i (sqrt G g^{ij}), from the fields directly.
  Vec drift = Vec::Zero(n);
  const double hb = 1e-5 * (1.0 + z.norm());
  for (int i = 0; i < n; ++i) {
    Vec zp = z, zm = z;
    zp(i) += hb;
    zm(i) -= hb;
    const Mat dflux = (volume(zp) * cometric(m, zp) - volume(zm) * cometric(m, zm)) / (2.0 * hb);
    drift += dflux.row(i).transpose();
  }
  drift /= volume(z);

  const double f0 = f(z);
  Vec fp(n), fm(n);
  for (int i = 0; i < n; ++i) {
    Vec a = z, b = z;
    a(i) += h;
    b(i) -= h;
    fp(i) = f(a);
    fm(i) = f(b);
  }
  double out = 0.0;
  for (int i = 0; i < n; ++i) {
    out += g(i, i) * (fp(i) - 2.0 * f0 + fm(i)) / (h * h);
    out += drift(i) * (fp(i) - fm(i)) / (2.0 * h);
    for (int j = i + 1; j < n; ++j) {
      if (g(i, j) == 0.0) continue;
      Vec pp = z, pm = z, mp = z, mm = z;
      pp(i) += h, pp(j) += h;
      pm(i) += h, pm(j) -= h;
      mp(i) -= h, mp(j) += h;
      mm(i) -= h, mm(j) -= h;
      out += 2.0 * g(i, j) * (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
    }
  }
  return out;
}

Amplitude wkb_amplitude(const Vec& z, const Vec& zp, const ManifoldModel& m, int order,
                        const AmplitudeOptions& options) {
  if (order != 0 && order != 1) throw DomainError("amplitude order must be 0 or 1");
  const ManifoldModel free = without_potential(m);
  Amplitude out;
  if ((z - zp).norm() == 0.0) {
    out.a0 = 1.0;
    if (order == 1) {
      const double L = laplace_beltrami(
          [&](const Vec& x) { return amplitude_a0(x, zp, free, options.shooting); }, zp, free,
          options.stencil_step);
      const double V = options.include_potential ? potential(m, zp) : 0.0;
      out.a1 = Complex(0.0, 0.5 * L - V);
    }
    return out;
  }
  const ConnectingPath path = shoot(z, zp, free, options.shooting);
  out.a0 = van_vleck(z, zp, free, path);
  out.d = std::sqrt(path.w.dot(cometric(free, zp) * path.w));
  if (order == 0) return out;

  const auto [nodes, weights] = numerics::gauss_legendre(options.quadrature_points, 0.0, 1.0);
  std::vector<double> stops(nodes.data(), nodes.data() + nodes.size());
  const Trajectory t = unit_flow(zp, path.w, free, options.shooting.flow, stops);
  double integral = 0.0;
  for (Eigen::Index k = 0; k < nodes.size(); ++k) {
    const auto it = std::find_if(t.samples.begin(), t.samples.end(),
                                 [&](const FlowSample& p) { return std::abs(p.s - nodes(k)) < 1e-14; });
    if (it == t.samples.end()) throw DomainError("quadrature node missing from the geodesic");
    const Vec& x = it->z;
    auto a0_at = [&](const Vec& y) { return amplitude_a0(y, zp, free, options.shooting); };
    const double ratio = laplace_beltrami(a0_at, x, free, options.stencil_step) / a0_at(x);
    const double V = options.include_potential ? potential(m, x) : 0.0;
    integral += weights(k) * (0.5 * ratio - V);
  }
  out.a1 = Complex(0.0, out.a0 * integral);
  return out;
}

Complex wkb_kernel_value(const Amplitude& a, double t, int n, int order) {
  if (!(t > 0.0)) throw DomainError("WKB kernel needs t > 0");
  const double dim = static_cast<double>(n);
  const double modulus = std::pow(2.0 * kPi * t, -0.5 * dim);
  Complex value = std::polar(modulus * a.a0, 0.5 * a.d * a.d / t - kPi * dim / 4.0);
  if (order == 1) value *= 1.0 + t * (*a.a1) / a.a0;
  return value;
}

WkbKernelSample wkb_kernel(const Vec& z, const Vec& zp, double t, const ManifoldModel& m,
                           int order, const AmplitudeOptions& options) {
  if (!(t > 0.0)) throw DomainError("WKB kernel needs t > 0");
  WkbKernelSample out;
  out.z = z;
  out.zp = zp;
  out.t = t;
  out.order = order;
  const Amplitude a = wkb_amplitude(z, zp, m, order, options);
  out.phase = 0.5 * a.d * a.d;
  out.a0 = a.a0;
  out.a1 = a.a1;
  out.value = wkb_kernel_value(a, t, m.n, order);
  return out;
}

double region_radius(const Vec& zp, const ManifoldModel& m, int directions, double max_length) {
  const int n = m.n;
  const ManifoldModel free = without_potential(m);
  const Mat g = metric(free, zp);
  double radius = std::min(max_length, m.injectivity_bound);
  FlowOptions o = ShootingOptions::shooting_flow();
  o.abs_tol = o.rel_tol = 1e-10;
  o.s_max = max_length;
  const int stops = std::max(8, static_cast<int>(20.0 * max_length));
  for (int k = 1; k < stops; ++k) o.parameter_stops.push_back(max_length * k / stops);
  for (int k = 0; k < directions; ++k) {
    Vec dir(n);
    if (n == 2) {
      const double a = 2.0 * kPi * k / directions;
      dir << std::cos(a), std::sin(a);
    } else {
      for (int i = 0; i < n; ++i)
        dir(i) = 2.0 * numerics::radical_inverse(static_cast<std::uint64_t>(k) + 1, numerics::nth_prime(i)) - 1.0;
      if (dir.norm() == 0.0) dir(0) = 1.0;
    }
    Vec zeta = g * dir;
    zeta /= std::sqrt(zeta.dot(cometric(free, zp) * zeta));
    const Trajectory t = integrate_bicharacteristic({zp, zeta, {}}, free, 1.0, Direction::forward, o);
    const VariationalFrame f = integrate_jacobi(t, free, o);
    double previous = std::numeric_limits<double>::quiet_NaN(), s_prev = 0.0;
    for (std::size_t i = 1; i < f.J.size(); ++i) {
      const double det = jacobi_block(f.J[i], n).determinant();
      if (std::isfinite(previous) && (det > 0.0) != (previous > 0.0)) {
        const double s_conj = s_prev + (f.s[i] - s_prev) * previous / (previous - det);
        radius = std::min(radius, 0.5 * s_conj);
        break;
      }
      previous = det;
      s_prev = f.s[i];
    }
  }
  return radius;
}

}  // namespace conic
