#include <cmath>
#include <set>

#include "conic/geometry.hpp"

namespace conic {

namespace {

template <typename S>
MatT<S> scaled_identity(int n, const S& s) {
  MatT<S> g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = i == j ? s : S(0.0);
  return g;
}

struct Flat {
  int n;
  template <typename S>
  MatT<S> cometric(const VecT<S>&) const { return scaled_identity<S>(n, S(1.0)); }
  template <typename S>
  S potential(const VecT<S>&) const { return S(0.0); }
};

struct InverseSquare {
  int n;
  double c, eps;
  template <typename S>
  MatT<S> cometric(const VecT<S>&) const { return scaled_identity<S>(n, S(1.0)); }
  template <typename S>
  S potential(const VecT<S>& z) const { return c / (z.squaredNorm() + eps * eps); }
};

struct BumpMetric {
  int n;
  double amplitude, width;
  template <typename S>
  S factor(const S& r2) const {
    using std::exp;
    return 1.0 + amplitude * exp(-r2 / (width * width));
  }
  template <typename S>
  MatT<S> cometric(const VecT<S>& z) const {
    return scaled_identity<S>(n, S(1.0) / factor<S>(z.squaredNorm()));
  }
  template <typename S>
  S potential(const VecT<S>&) const { return S(0.0); }
};

// Smooth step: 0 for t <= 0, 1 for t >= 1.
template <typename S>
S smooth_step(const S& t) {
  using std::exp;
  const double tv = value_of(t);
  if (tv <= 0.0) return S(0.0);
  if (tv >= 1.0) return S(1.0);
  const S a = exp(-1.0 / t);
  const S b = exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

// Angular part r^2 (1 + w) k0 with w = (kappa + kappa_y y_1) chi(r) / r, so that
// k = k0 + x k1(y) for r >= 2 r_cut.
struct ConicPerturbation {
  int n;
  double kappa, kappa_y, cutoff;
  template <typename S>
  MatT<S> cometric(const VecT<S>& z) const {
    using std::sqrt;
    const double rv = std::sqrt(value_of(S(z.squaredNorm())));
    MatT<S> g = scaled_identity<S>(n, S(1.0));
    if (rv <= cutoff) return g;
    const S r = sqrt(z.squaredNorm());
    const VecT<S> y = z / r;
    const S w = (kappa + kappa_y * y(0)) * smooth_step<S>((r - cutoff) / cutoff) / r;
    const S shrink = w / (1.0 + w);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = g(i, j) - shrink * ((i == j ? 1.0 : 0.0) - y(i) * y(j));
    return g;
  }
  template <typename S>
  S potential(const VecT<S>&) const { return S(0.0); }
};

// Constant with a derivative vector sized like r, so it mixes safely with expressions.
Dual constant_like(double v, const Dual& r) {
  return Dual(v, DerivativeVec::Zero(r.derivatives().size()));
}

double take(ParameterMap& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const double v = it->second;
  params.erase(it);
  if (!std::isfinite(v)) throw ModelError("parameter '" + key + "' is not finite");
  return v;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ModelError(message);
}

}  // namespace

ManifoldModel build_manifold(const std::string& label, int n, const ParameterMap& given) {
  require(n >= 2 && n <= kMaxDim, "dimension must lie in [2, " + std::to_string(kMaxDim) + "]");
  ParameterMap params = given;
  ManifoldModel m;
  if (label == "flat") {
    m = model_from_functor(label, n, Flat{n});
    m.radial = RadialProfile{[](const Dual& r) { return constant_like(1.0, r); },
                             [](const Dual& r) { return constant_like(0.0, r); }};
  } else if (label == "inverse-square") {
    const double c = take(params, "c", 1.0);
    const double eps = take(params, "eps", 0.0);
    const double guard = take(params, "guard_radius", 1e-6);
    require(c >= 0.0, "inverse-square needs c >= 0");
    require(eps >= 0.0, "inverse-square needs eps >= 0");
    require(guard >= 0.0, "inverse-square needs guard_radius >= 0");
    require(eps > 0.0 || guard > 0.0, "inverse-square with eps = 0 needs guard_radius > 0");
    m = model_from_functor(label, n, InverseSquare{n, c, eps});
    m.guard_radius = eps > 0.0 ? 0.0 : guard;
    m.radial = RadialProfile{[](const Dual& r) { return constant_like(1.0, r); },
                             [c, eps](const Dual& r) { return Dual(c / (r * r + eps * eps)); }};
    m.params = {{"c", c}, {"eps", eps}, {"guard_radius", guard}};
  } else if (label == "bump-metric") {
    const double amplitude = take(params, "amplitude", 0.5);
    const double width = take(params, "width", 1.0);
    require(amplitude > -1.0, "bump-metric needs amplitude > -1");
    require(width > 0.0, "bump-metric needs width > 0");
    const BumpMetric bump{n, amplitude, width};
    m = model_from_functor(label, n, bump);
    m.radial = RadialProfile{[bump](const Dual& r) { return bump.factor<Dual>(r * r); },
                             [](const Dual& r) { return constant_like(0.0, r); }};
    m.params = {{"amplitude", amplitude}, {"width", width}};
  } else if (label == "conic-perturbation") {
    const double kappa = take(params, "kappa", 0.5);
    const double kappa_y = take(params, "kappa_y", 0.25);
    const double cutoff = take(params, "cutoff_radius", 2.0);
    require(cutoff > 0.0, "conic-perturbation needs cutoff_radius > 0");
    require(std::abs(kappa) + std::abs(kappa_y) < cutoff,
            "conic-perturbation needs |kappa| + |kappa_y| < cutoff_radius");
    m = model_from_functor(label, n, ConicPerturbation{n, kappa, kappa_y, cutoff});
    m.params = {{"kappa", kappa}, {"kappa_y", kappa_y}, {"cutoff_radius", cutoff}};
  } else {
    throw ModelError("unknown model label '" + label + "'");
  }
  if (!params.empty())
    throw ModelError("unknown parameter '" + params.begin()->first + "' for model '" + label + "'");
  validate_model(m);
  return m;
}

}  // namespace conic
