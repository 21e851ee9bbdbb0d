#ifndef CONIC_GEOMETRY_HPP
#define CONIC_GEOMETRY_HPP

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "conic/types.hpp"

namespace conic {

/// Inverse metric g^{ij}(z) and potential V(z) evaluated in scalar type S.
template <typename S>
struct Fields {
  std::function<MatT<S>(const VecT<S>&)> cometric;
  std::function<S(const VecT<S>&)> potential;

  explicit operator bool() const { return cometric && potential; }
};

/// Conformal profile of a rotationally symmetric model: G = psi(r) I, V = V(r).
struct RadialProfile {
  std::function<Dual(const Dual&)> conformal_factor;
  std::function<Dual(const Dual&)> potential;
};

/// Metric and potential on R^n, asymptotically conic near |z| = infinity.
/// Immutable after construction; every evaluation is pure.
struct ManifoldModel {
  std::string label;
  int n = 2;
  std::map<std::string, double> params;

  Fields<double> fields;
  Fields<Dual> dual_fields;    // empty when derivatives come from finite differences
  Fields<Dual2> dual2_fields;

  std::optional<RadialProfile> radial;
  double guard_radius = 0.0;
  double injectivity_bound = std::numeric_limits<double>::infinity();
  bool finite_difference_derivatives = false;

  bool rotationally_symmetric() const { return radial.has_value(); }
};

using ParameterMap = std::map<std::string, double>;

/// Built-in models: "flat", "inverse-square", "bump-metric", "conic-perturbation".
/// Unknown labels or parameters and out-of-range values throw ModelError.
ManifoldModel build_manifold(const std::string& label, int n, const ParameterMap& params = {});

/// Wraps a functor exposing `cometric<S>(z)` and `potential<S>(z)` templates, so that
/// first and second derivatives come from automatic differentiation.
template <typename Functor>
ManifoldModel model_from_functor(std::string label, int n, const Functor& f) {
  ManifoldModel m;
  m.label = std::move(label);
  m.n = n;
  m.fields = {[f](const Vec& z) { return f.template cometric<double>(z); },
              [f](const Vec& z) { return f.template potential<double>(z); }};
  m.dual_fields = {[f](const VecT<Dual>& z) { return f.template cometric<Dual>(z); },
                   [f](const VecT<Dual>& z) { return f.template potential<Dual>(z); }};
  m.dual2_fields = {[f](const VecT<Dual2>& z) { return f.template cometric<Dual2>(z); },
                    [f](const VecT<Dual2>& z) { return f.template potential<Dual2>(z); }};
  return m;
}

/// Model from plain double callables. Derivatives use central differences with
/// step 1e-6 (1 + |z|), and the model is flagged accordingly.
ManifoldModel model_from_callables(std::string label, int n,
                                   std::function<Mat(const Vec&)> cometric,
                                   std::function<double(const Vec&)> potential);

/// Same metric with V = 0, for pure geodesic quantities.
ManifoldModel without_potential(const ManifoldModel& m);

/// Spot-checks positive-definiteness on a sample grid and the x^2 V limit on a ray.
/// Throws ModelError naming the first offending point.
void validate_model(const ManifoldModel& m);

Mat cometric(const ManifoldModel& m, const Vec& z);
Mat metric(const ManifoldModel& m, const Vec& z);
double potential(const ManifoldModel& m, const Vec& z);

struct BoundaryView {
  double x = 0.0;
  Vec y;
  double lambda = 0.0;
  Vec mu;
};

struct PhasePoint {
  Vec z;
  Vec zeta;
  std::optional<BoundaryView> boundary;
};

/// Radial/tangential split of zeta at z: y = z/|z|, zeta = lambda dr/|dr|_g + mu with mu
/// g-orthogonal to dr. In flat space lambda = zeta.y and mu = zeta - (zeta.y) y.
template <typename S>
void boundary_split(const VecT<S>& z, const VecT<S>& zeta, const MatT<S>& ginv, S& x,
                    VecT<S>& y, S& lambda, VecT<S>& mu) {
  using std::sqrt;
  const S r = sqrt(z.squaredNorm());
  x = S(1.0) / r;
  y = z / r;
  const S dr_norm = sqrt(y.dot(ginv * y));
  lambda = y.dot(ginv * zeta) / dr_norm;
  mu = zeta - y * (lambda / dr_norm);
}

/// |mu|_g = sqrt(mu^T g^{-1} mu).
double covector_norm(const ManifoldModel& m, const Vec& z, const Vec& covector);

/// Adds the boundary view. Throws DomainError at z = 0.
PhasePoint to_boundary_chart(const PhasePoint& p, const ManifoldModel& m);

/// Rebuilds (z, zeta) from a boundary view.
PhasePoint from_boundary_chart(const BoundaryView& b, const ManifoldModel& m);

/// p = g^{ij} zeta_i zeta_j + V - lambda0^2.
double hamiltonian(const ManifoldModel& m, const Vec& z, const Vec& zeta, double lambda0);
double hamiltonian_eval(const PhasePoint& p, const ManifoldModel& m, double lambda0);

struct HamiltonianGradient {
  double value = 0.0;
  Vec dz;
  Vec dzeta;
};

/// Value and first derivatives of g^{ij} zeta_i zeta_j + V - lambda0^2.
HamiltonianGradient hamiltonian_gradient(const ManifoldModel& m, const Vec& z, const Vec& zeta,
                                         double lambda0);

/// Hessian over phase-space coordinates (z, zeta), a symmetric 2n x 2n matrix.
Mat hamiltonian_hessian(const ManifoldModel& m, const Vec& z, const Vec& zeta);

}  // namespace conic

#endif  // CONIC_GEOMETRY_HPP
