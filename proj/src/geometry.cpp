#include "conic/geometry.hpp"

#include <cmath>
#include <sstream>

#include "conic/numerics/roots.hpp"

namespace conic {

namespace {

double fd_step(const Vec& z, double base) { return base * (1.0 + z.norm()); }

std::string format_point(const Vec& z) {
  std::ostringstream out;
  out.precision(6);
  out << "(";
  for (Eigen::Index i = 0; i < z.size(); ++i) out << (i ? ", " : "") << z(i);
  out << ")";
  return out.str();
}

void check_dimension(const ManifoldModel& m, const Vec& z, const Vec& zeta) {
  if (z.size() != m.n || zeta.size() != m.n)
    throw DomainError("phase point dimension does not match model dimension " +
                      std::to_string(m.n));
}

}  // namespace

ManifoldModel model_from_callables(std::string label, int n,
                                   std::function<Mat(const Vec&)> cometric,
                                   std::function<double(const Vec&)> potential) {
  if (n < 2 || n > kMaxDim)
    throw ModelError("dimension must lie in [2, " + std::to_string(kMaxDim) + "]");
  ManifoldModel m;
  m.label = std::move(label);
  m.n = n;
  m.fields = {std::move(cometric), std::move(potential)};
  m.finite_difference_derivatives = true;
  return m;
}

ManifoldModel without_potential(const ManifoldModel& m) {
  ManifoldModel out = m;
  out.fields.potential = [](const Vec&) { return 0.0; };
  if (out.dual_fields) out.dual_fields.potential = [](const VecT<Dual>&) { return Dual(0.0); };
  if (out.dual2_fields) out.dual2_fields.potential = [](const VecT<Dual2>&) { return Dual2(0.0); };
  if (out.radial)
    out.radial->potential = [](const Dual& r) {
      return Dual(0.0, DerivativeVec::Zero(r.derivatives().size()));
    };
  out.guard_radius = 0.0;
  return out;
}

Mat cometric(const ManifoldModel& m, const Vec& z) { return m.fields.cometric(z); }

Mat metric(const ManifoldModel& m, const Vec& z) {
  return m.fields.cometric(z).llt().solve(Mat::Identity(m.n, m.n));
}

double potential(const ManifoldModel& m, const Vec& z) { return m.fields.potential(z); }

void validate_model(const ManifoldModel& m) {
  if (!m.fields) throw ModelError("model '" + m.label + "' has no field callables");
  std::vector<Vec> directions;
  for (int i = 0; i < m.n; ++i) {
    directions.push_back(Vec::Unit(m.n, i));
    directions.push_back(-Vec::Unit(m.n, i));
  }
  for (unsigned k = 1; k <= 8; ++k) {
    Vec d(m.n);
    for (int i = 0; i < m.n; ++i) d(i) = 2.0 * numerics::radical_inverse(k, numerics::nth_prime(i)) - 1.0;
    if (d.norm() > 1e-3) directions.push_back(d.normalized());
  }
  std::vector<double> radii = {0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 8.0, 16.0, 64.0, 1e3, 1e5};
  std::vector<Vec> points;
  if (m.guard_radius <= 0.0) points.push_back(Vec::Zero(m.n));
  for (double r : radii) {
    if (r <= m.guard_radius) continue;
    for (const Vec& d : directions) points.push_back(r * d);
  }
  for (const Vec& z : points) {
    const Mat g = m.fields.cometric(z);
    if (g.rows() != m.n || g.cols() != m.n)
      throw ModelError("cometric has wrong shape at " + format_point(z));
    if (!g.allFinite() || (g - g.transpose()).norm() > 1e-12 * (1.0 + g.norm()))
      throw ModelError("metric is not finite and symmetric at " + format_point(z));
    const double low = Eigen::SelfAdjointEigenSolver<Mat>(g, Eigen::EigenvaluesOnly)
                           .eigenvalues()
                           .minCoeff();
    if (!(low > 0.0))
      throw ModelError("metric is not positive-definite at " + format_point(z));
    if (!std::isfinite(m.fields.potential(z)))
      throw ModelError("potential is not finite at " + format_point(z));
  }
  // x^2 V must settle along a ray.
  const Vec ray = Vec::Unit(m.n, 0);
  const double f5 = 1e10 * m.fields.potential(1e5 * ray);
  const double f6 = 1e12 * m.fields.potential(1e6 * ray);
  if (!std::isfinite(f5) || !std::isfinite(f6) || std::abs(f6 - f5) > 1e-3 * (1.0 + std::abs(f6)))
    throw ModelError("x^2 V has no limit at x = 0 along " + format_point(ray));
}

double covector_norm(const ManifoldModel& m, const Vec& z, const Vec& covector) {
  return std::sqrt(covector.dot(m.fields.cometric(z) * covector));
}

PhasePoint to_boundary_chart(const PhasePoint& p, const ManifoldModel& m) {
  check_dimension(m, p.z, p.zeta);
  if (p.z.norm() == 0.0) throw DomainError("boundary chart is undefined at z = 0");
  PhasePoint out = p;
  BoundaryView b;
  boundary_split<double>(p.z, p.zeta, m.fields.cometric(p.z), b.x, b.y, b.lambda, b.mu);
  out.boundary = std::move(b);
  return out;
}

PhasePoint from_boundary_chart(const BoundaryView& b, const ManifoldModel& m) {
  if (!(b.x > 0.0)) throw DomainError("boundary view needs x > 0");
  PhasePoint p;
  p.z = b.y / b.x;
  const Mat g = m.fields.cometric(p.z);
  const double dr_norm = std::sqrt(b.y.dot(g * b.y));
  p.zeta = b.mu + b.y * (b.lambda / dr_norm);
  p.boundary = b;
  return p;
}

double hamiltonian(const ManifoldModel& m, const Vec& z, const Vec& zeta, double lambda0) {
  return zeta.dot(m.fields.cometric(z) * zeta) + m.fields.potential(z) - lambda0 * lambda0;
}

double hamiltonian_eval(const PhasePoint& p, const ManifoldModel& m, double lambda0) {
  check_dimension(m, p.z, p.zeta);
  return hamiltonian(m, p.z, p.zeta, lambda0);
}

HamiltonianGradient hamiltonian_gradient(const ManifoldModel& m, const Vec& z, const Vec& zeta,
                                         double lambda0) {
  const int n = m.n;
  HamiltonianGradient out;
  if (m.dual_fields) {
    VecT<Dual> zd(n);
    for (int i = 0; i < n; ++i) zd(i) = Dual(z(i), DerivativeVec::Unit(n, i));
    const MatT<Dual> g = m.dual_fields.cometric(zd);
    const Vec gz = g.unaryExpr([](const Dual& v) { return v.value(); }) * zeta;
    Dual h = m.dual_fields.potential(zd);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        // Materialize before adding: constant entries carry empty derivative vectors.
        const Dual term = g(i, j) * (zeta(i) * zeta(j));
        h += term;
      }
    out.value = h.value() - lambda0 * lambda0;
    out.dz = h.derivatives().size() ? Vec(h.derivatives()) : Vec::Zero(n);
    out.dzeta = 2.0 * gz;
    return out;
  }
  const Mat g = m.fields.cometric(z);
  out.value = zeta.dot(g * zeta) + m.fields.potential(z) - lambda0 * lambda0;
  out.dzeta = 2.0 * g * zeta;
  out.dz.resize(n);
  const double h = fd_step(z, 1e-6);
  for (int i = 0; i < n; ++i) {
    Vec zp = z, zm = z;
    zp(i) += h;
    zm(i) -= h;
    out.dz(i) = (hamiltonian(m, zp, zeta, 0.0) - hamiltonian(m, zm, zeta, 0.0)) / (2.0 * h);
  }
  if (!out.dz.allFinite())
    throw DerivativeError("finite-difference gradient is not finite at " + format_point(z));
  return out;
}

Mat hamiltonian_hessian(const ManifoldModel& m, const Vec& z, const Vec& zeta) {
  const int n = m.n;
  const int dim = 2 * n;
  Mat hess(dim, dim);
  if (m.dual2_fields) {
    VecT<Dual2> zd(n), kd(n);
    auto seed = [dim](double v, int slot) {
      Dual2 x;
      x.value() = Dual(v, DerivativeVec::Unit(dim, slot));
      x.derivatives() = DualDerivativeVec::Zero(dim);
      x.derivatives()(slot) = Dual(1.0, DerivativeVec::Zero(dim));
      return x;
    };
    for (int i = 0; i < n; ++i) {
      zd(i) = seed(z(i), i);
      kd(i) = seed(zeta(i), n + i);
    }
    const MatT<Dual2> g = m.dual2_fields.cometric(zd);
    Dual2 h = m.dual2_fields.potential(zd);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) h += g(i, j) * kd(i) * kd(j);
    for (int i = 0; i < dim; ++i) {
      const DerivativeVec& row = h.derivatives()(i).derivatives();
      if (row.size()) hess.row(i) = Vec(row).transpose();
      else hess.row(i).setZero();
    }
    return 0.5 * (hess + hess.transpose());
  }
  const Mat g = m.fields.cometric(z);
  hess.bottomRightCorner(n, n) = 2.0 * g;
  const double h1 = fd_step(z, 1e-6);
  for (int i = 0; i < n; ++i) {
    Vec zp = z, zm = z;
    zp(i) += h1;
    zm(i) -= h1;
    const Vec col = (m.fields.cometric(zp) - m.fields.cometric(zm)) * zeta * (1.0 / h1);
    hess.block(i, n, 1, n) = col.transpose();
    hess.block(n, i, n, 1) = col;
  }
  const double h2 = fd_step(z, 1e-4);
  auto kinetic = [&](const Vec& p) { return hamiltonian(m, p, zeta, 0.0); };
  const double h0 = kinetic(z);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double v;
      if (i == j) {
        Vec zp = z, zm = z;
        zp(i) += h2;
        zm(i) -= h2;
        v = (kinetic(zp) - 2.0 * h0 + kinetic(zm)) / (h2 * h2);
      } else {
        Vec pp = z, pm = z, mp = z, mm = z;
        pp(i) += h2; pp(j) += h2;
        pm(i) += h2; pm(j) -= h2;
        mp(i) -= h2; mp(j) += h2;
        mm(i) -= h2; mm(j) -= h2;
        v = (kinetic(pp) - kinetic(pm) - kinetic(mp) + kinetic(mm)) / (4.0 * h2 * h2);
      }
      hess(i, j) = hess(j, i) = v;
    }
  }
  if (!hess.allFinite())
    throw DerivativeError("finite-difference Hessian is not finite at " + format_point(z));
  return hess;
}

}  // namespace conic
