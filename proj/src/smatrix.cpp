#include "conic/smatrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <tuple>

#include "conic/numerics/extrapolation.hpp"
#include "conic/numerics/parallel.hpp"

namespace conic {

namespace {

double wrapped_angle(const Vec& from, const Vec& to, const Vec& toward) {
  return std::atan2(to.dot(toward), to.dot(from));
}

std::size_t node_sample(const Trajectory& t, double radius) {
  const auto it = std::find(t.event_radii.begin(), t.event_radii.end(), radius);
  if (it == t.event_radii.end())
    throw DomainError("trajectory has no sample at r = " + std::to_string(radius));
  return t.event_samples[static_cast<std::size_t>(it - t.event_radii.begin())];
}

// Asymptotic linearization of one end: extrapolated d(y)/dq0 and d(M)/dq0.
struct EndJacobian {
  Mat dy;
  Mat dM;
};

EndJacobian end_jacobian(const SojournDatum& end, const VariationalFrame& frame,
                         const ManifoldModel& m) {
  const Trajectory& t = end.trajectory;
  if (frame.J.size() != t.samples.size())
    throw DomainError("variational frame does not match the trajectory's sample grid");
  std::vector<double> r;
  std::vector<Mat> dy, dM;
  for (double radius : end.report.radii) {
    const std::size_t k = node_sample(t, radius);
    const FlowSample& p = t.samples[k];
    const AsymptoticJet jet = asymptotic_jet(m, p.z, p.zeta);
    r.push_back(p.z.norm());
    dy.push_back(jet.dy * frame.J[k]);
    dM.push_back(jet.dM * frame.J[k]);
  }
  const int order = end.report.order;
  return {numerics::limit_in_inverse_radius(r, dy, order),
          numerics::limit_in_inverse_radius(r, dM, order)};
}

struct Probe {
  double value = 0.0;
  double slope = 0.0;
  ConnectingGeodesic geo;
};

class Searcher {
 public:
  Searcher(const Vec& y_in, const ManifoldModel& m, double lambda0, const SMatrixOptions& o)
      : y_in_(y_in), E_(complement_basis(y_in)), m_(m), lambda0_(lambda0), o_(o) {}

  const Mat& basis() const { return E_; }

  // Scatter at impact coordinates b (in the complement basis), with the Jacobian.
  ConnectingGeodesic shoot(const Vec& b) const {
    ConnectingGeodesic g;
    g.y_in = y_in_;
    g.sojourn = scatter(y_in_, E_ * b, m_, lambda0_, o_.sojourn, o_.seed);
    const SigmaResult s = jacobian_sigma(g.sojourn, m_, lambda0_, o_.sojourn, o_.singular_tol);
    g.sojourn.sigma = s.sigma;
    g.sojourn.nondegenerate = s.nondegenerate;
    g.y_out = g.sojourn.y_out;
    g.impact = g.sojourn.impact;
    g.dy_out_db = s.dy_out_db;
    return g;
  }

  // Scatter without the Jacobian, for grid bracketing; empty when the shot fails
  // (guard ball, trapping, seed convergence).
  std::optional<TotalSojourn> try_scatter(const Vec& b) const {
    try {
      return scatter(y_in_, E_ * b, m_, lambda0_, o_.sojourn, o_.seed);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  // Grid along the line t e in impact coordinates.
  std::vector<std::optional<TotalSojourn>> grid(const Vec& e, std::vector<double>& ts) const {
    const int count = std::max(o_.impact_grid, 3);
    ts.resize(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) ts[k] = -o_.impact_max + 2.0 * o_.impact_max * k / (count - 1);
    std::vector<std::optional<TotalSojourn>> out(ts.size());
    numerics::parallel_for(ts.size(), o_.jobs, [&](std::size_t k) { out[k] = try_scatter(ts[k] * e); });
    return out;
  }

  // Bracket-safeguarded Newton on a scalar function of t along the line t e.
  template <typename Scalar>
  std::optional<ConnectingGeodesic> refine_line(const Vec& e, double a, double fa, double b,
                                                double fb, Scalar&& scalar) const {
    double t = a - fa * (b - a) / (fb - fa);
    std::optional<ConnectingGeodesic> best;
    double best_value = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= o_.max_newton; ++it) {
      Probe p;
      try {
        p.geo = shoot(t * e);
        std::tie(p.value, p.slope) = scalar(p.geo, e);
      } catch (const Error&) {
        return std::nullopt;
      }
      if (std::abs(p.value) < best_value) {
        best_value = std::abs(p.value);
        best = p.geo;
        best->newton = {it, best_value, false};
      }
      if (std::abs(p.value) <= 0.1 * o_.direction_tol) break;
      if ((p.value > 0.0) == (fa > 0.0)) {
        a = t;
        fa = p.value;
      } else {
        b = t;
        fb = p.value;
      }
      double next = p.slope != 0.0 ? t - p.value / p.slope : 0.5 * (a + b);
      if (!(next > std::min(a, b) && next < std::max(a, b))) next = 0.5 * (a + b);
      if (std::abs(next - t) <= 1e-15 * (1.0 + std::abs(t))) break;
      t = next;
    }
    if (best && best_value <= o_.direction_tol) best->newton.converged = true;
    return best;
  }

  // Damped Newton in all n - 1 impact coordinates towards y_out = target.
  std::optional<ConnectingGeodesic> refine_full(Vec b, const Vec& target) const {
    const Mat Et = complement_basis(target);
    auto miss = [&](const ConnectingGeodesic& g) {
      return g.y_out.dot(target) > 0.0 ? (g.y_out - target).norm()
                                        : std::numeric_limits<double>::infinity();
    };
    ConnectingGeodesic g;
    try {
      g = shoot(b);
    } catch (const Error&) {
      return std::nullopt;
    }
    double current = miss(g);
    int it = 1;
    for (; it <= o_.max_newton && current > 0.1 * o_.direction_tol; ++it) {
      const Vec F = Et.transpose() * g.y_out;
      const Mat Jac = Et.transpose() * g.dy_out_db;
      const Vec step = Jac.colPivHouseholderQr().solve(F);
      bool improved = false;
      for (double scale = 1.0; scale >= 1.0 / 32.0; scale *= 0.5) {
        try {
          ConnectingGeodesic trial = shoot(b - scale * step);
          if (miss(trial) < current) {
            b -= scale * step;
            g = std::move(trial);
            current = miss(g);
            improved = true;
            break;
          }
        } catch (const Error&) {
        }
      }
      if (!improved) break;
    }
    g.newton = {it, current, current <= o_.direction_tol};
    return g;
  }

 private:
  Vec y_in_;
  Mat E_;
  const ManifoldModel& m_;
  double lambda0_;
  SMatrixOptions o_;
};

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

void check_unit(const Vec& y, int n, const char* name) {
  if (y.size() != n) throw DomainError(std::string(name) + " has the wrong dimension");
  if (std::abs(y.norm() - 1.0) > 1e-12) throw DomainError(std::string(name) + " must be a unit vector");
}

// Deduplicates, and turns a singular solution into a degeneracy report.
ConnectingSearch finish(std::vector<ConnectingGeodesic> found, const SMatrixOptions& o) {
  ConnectingSearch out;
  for (ConnectingGeodesic& g : found) {
    if (!g.newton.converged) continue;
    if (!g.sojourn.nondegenerate) {
      out.degenerate = true;
      out.geodesics.clear();
      out.report = "degenerate connecting family: sigma = " + sci(*g.sojourn.sigma) +
                   " at impact |b| = " + sci(g.impact.norm()) +
                   "; the Jacobian dy_out/db is singular, exclude this direction pair";
      return out;
    }
    const bool duplicate = std::any_of(out.geodesics.begin(), out.geodesics.end(), [&](const auto& h) {
      return (h.impact - g.impact).norm() <= o.dedup_tol;
    });
    if (!duplicate) out.geodesics.push_back(std::move(g));
  }
  std::sort(out.geodesics.begin(), out.geodesics.end(),
            [](const auto& a, const auto& b) { return a.impact.norm() < b.impact.norm(); });
  out.report = std::to_string(out.geodesics.size()) + " connecting geodesic(s)";
  return out;
}

}  // namespace

SigmaResult jacobian_sigma(const TotalSojourn& geo, const VariationalFrame& forward,
                           const VariationalFrame& backward, const ManifoldModel& m,
                           double lambda0, const SojournOptions&, double singular_tol) {
  const int n = m.n;
  const EndJacobian f = end_jacobian(geo.forward, forward, m);
  const EndJacobian b = end_jacobian(geo.backward, backward, m);
  const FlowSample& seed = geo.forward.trajectory.samples.front();
  const HamiltonianGradient dH = hamiltonian_gradient(m, seed.z, seed.zeta, lambda0);

  // Constraints on a seed variation dq: prescribed d(impact), fixed y_in, on the shell.
  // The flow direction is left free; the minimum-norm solution drops it.
  const Mat Ein = complement_basis(geo.y_in);
  Mat C(2 * n - 1, 2 * n);
  C.topRows(n - 1) = Ein.transpose() * b.dM / lambda0;
  C.middleRows(n - 1, n - 1) = -Ein.transpose() * b.dy;
  C.row(2 * n - 2) << dH.dz.transpose(), dH.dzeta.transpose();
  Mat rhs = Mat::Zero(2 * n - 1, n - 1);
  rhs.topRows(n - 1).setIdentity();
  const Mat dq = C.completeOrthogonalDecomposition().solve(rhs);

  SigmaResult out;
  out.dy_out_db = f.dy * dq;
  const Mat Eout = complement_basis(geo.y_out);
  out.sigma = std::abs((Eout.transpose() * out.dy_out_db).determinant());
  out.nondegenerate = out.sigma > singular_tol;
  return out;
}

SigmaResult jacobian_sigma(const TotalSojourn& geo, const ManifoldModel& m, double lambda0,
                           const SojournOptions& options, double singular_tol) {
  const VariationalFrame f = integrate_jacobi(geo.forward.trajectory, m, options.flow);
  const VariationalFrame b = integrate_jacobi(geo.backward.trajectory, m, options.flow);
  return jacobian_sigma(geo, f, b, m, lambda0, options, singular_tol);
}

ConnectingSearch find_connecting_geodesics(const Vec& y_in, const Vec& y_out,
                                           const ManifoldModel& m, double lambda0,
                                           const SMatrixOptions& options) {
  const int n = m.n;
  check_unit(y_in, n, "y_in");
  check_unit(y_out, n, "y_out");
  Searcher searcher(y_in, m, lambda0, options);
  const Mat& E = searcher.basis();

  // Search line: towards y_out's component off y_in (the scattering plane of a central
  // potential), else the first basis direction.
  Vec e = E.transpose() * y_out;
  if (e.norm() < 1e-12) e = Vec::Unit(n - 1, 0);
  e.normalize();
  Vec toward = E * e - y_out * y_out.dot(E * e);
  if (toward.norm() < 1e-12) toward = complement_basis(y_out).col(0);
  toward.normalize();
  auto angle = [&](const Vec& y) { return wrapped_angle(y_out, y, toward); };

  std::vector<double> ts;
  const auto samples = searcher.grid(e, ts);
  std::vector<ConnectingGeodesic> found;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!samples[k]) continue;
    const double fk = angle(samples[k]->y_out);
    if (std::abs(fk) <= options.direction_tol) {
      if (auto g = searcher.refine_full(ts[k] * e, y_out)) found.push_back(std::move(*g));
      if (!found.empty() && !found.back().sojourn.nondegenerate) break;
      continue;
    }
    if (k + 1 == ts.size() || !samples[k + 1]) continue;
    const double fn = angle(samples[k + 1]->y_out);
    if (std::abs(fn) <= options.direction_tol || (fk > 0.0) == (fn > 0.0)) continue;
    if (std::abs(fk - fn) > kPi) continue;  // wrap through the antipode, not a root
    if (n == 2) {
      auto scalar = [&](const ConnectingGeodesic& g, const Vec& dir) {
        const Vec dy = g.dy_out_db * dir;
        const double p = g.y_out.dot(toward), q = g.y_out.dot(y_out);
        return std::pair{angle(g.y_out), (q * dy.dot(toward) - p * dy.dot(y_out)) / (p * p + q * q)};
      };
      if (auto g = searcher.refine_line(e, ts[k], fk, ts[k + 1], fn, scalar)) found.push_back(std::move(*g));
    } else {
      const double t = ts[k] - fk * (ts[k + 1] - ts[k]) / (fn - fk);
      if (auto g = searcher.refine_full(t * e, y_out)) found.push_back(std::move(*g));
    }
  }
  for (ConnectingGeodesic& g : found)
    if ((g.y_out - y_out).norm() > options.direction_tol) g.newton.converged = false;
  return finish(std::move(found), options);
}

ConnectingSearch find_connecting_geodesics_by_deflection(const Vec& y_in, double deflection,
                                                         const ManifoldModel& m,
                                                         double lambda0,
                                                         const SMatrixOptions& options) {
  if (m.n != 2) throw DomainError("unwrapped deflection targets need n = 2");
  check_unit(y_in, 2, "y_in");
  Searcher searcher(y_in, m, lambda0, options);
  const Vec e = Vec::Ones(1);
  std::vector<double> ts;
  const auto samples = searcher.grid(e, ts);
  auto scalar = [&](const ConnectingGeodesic& g, const Vec&) {
    const Vec tangent = complement_basis(g.y_out);
    return std::pair{g.sojourn.deflection - deflection, tangent.dot(g.dy_out_db.col(0))};
  };
  std::vector<ConnectingGeodesic> found;
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    if (!samples[k] || !samples[k + 1]) continue;
    const double fk = samples[k]->deflection - deflection;
    const double fn = samples[k + 1]->deflection - deflection;
    if ((fk > 0.0) == (fn > 0.0) && fk != 0.0) continue;
    if (std::abs(fk - fn) > kPi) continue;  // jump across a singular impact, not a root
    if (auto g = searcher.refine_line(e, ts[k], fk, ts[k + 1], fn, scalar)) found.push_back(std::move(*g));
  }
  return finish(std::move(found), options);
}

SMatrixEntry assemble_smatrix(double lambda, const ConnectingSearch& search, int n) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (search.degenerate)
    throw DegenerateError(search.report +
                          "; the leading-order formula excludes the diagonal and caustic set");
  SMatrixEntry out;
  out.lambda = lambda;
  out.value = 0.0;
  const double scale = std::pow(lambda, 0.5 * (n - 1));
  for (const ConnectingGeodesic& g : search.geodesics) {
    if (!g.sojourn.nondegenerate || !g.sojourn.sigma)
      throw DegenerateError("connecting geodesic without a nondegenerate Jacobian");
    SMatrixContribution c;
    c.impact = g.impact;
    c.sigma = *g.sojourn.sigma;
    c.tau = g.sojourn.tau;
    c.amplitude = scale / std::sqrt(c.sigma);
    c.phase = lambda * c.tau;
    c.value = std::polar(c.amplitude, c.phase);
    out.value += c.value;
    out.contributions.push_back(c);
    if (out.y_in.size() == 0) {
      out.y_in = g.y_in;
      out.y_out = g.y_out;
    }
  }
  out.phase_convention_sensitive = out.contributions.size() > 1;
  return out;
}

SMatrixEntry assemble_smatrix(double lambda, const Vec& y_in, const Vec& y_out,
                              const ManifoldModel& m, double lambda0,
                              const SMatrixOptions& options) {
  const ConnectingSearch search = find_connecting_geodesics(y_in, y_out, m, lambda0, options);
  SMatrixEntry out = assemble_smatrix(lambda, search, m.n);
  out.y_in = y_in;
  out.y_out = y_out;
  return out;
}

}  // namespace conic
