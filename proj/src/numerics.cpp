#include <algorithm>
#include <cmath>
#include <queue>

#include "conic/numerics/extrapolation.hpp"
#include "conic/numerics/ode.hpp"
#include "conic/numerics/quadrature.hpp"
#include "conic/numerics/roots.hpp"

namespace conic::numerics {

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

namespace {

constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

double scaled_rms(const Vec& err, const Vec& y0, const Vec& y1, double abs_tol, double rel_tol,
                  const Vec* weights) {
  double sum = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double w = weights ? (*weights)(i) : 1.0;
    if (w == 0.0) continue;
    const double scale = abs_tol + rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double q = w * err(i) / scale;
    sum += q * q;
    ++used;
  }
  return used ? std::sqrt(sum / static_cast<double>(used)) : 0.0;
}

}  // namespace

DormandPrince45::DormandPrince45(Rhs rhs) : rhs_(std::move(rhs)) {}

void DormandPrince45::eval(double s, const Vec& y, Vec& out) {
  out.resize(y.size());
  rhs_(s, y, out);
  ++evaluations_;
}

double DormandPrince45::step(double s, const Vec& y, double h, Vec& y_new, double abs_tol,
                             double rel_tol, const Vec* weights) {
  if (fsal_valid_ && s == fsal_s_ && fsal_y_.size() == y.size() && fsal_y_ == y) {
    k1_ = k7_;
  } else {
    eval(s, y, k1_);
  }
  tmp_ = y + h * a21 * k1_;
  eval(s + c2 * h, tmp_, k2_);
  tmp_ = y + h * (a31 * k1_ + a32 * k2_);
  eval(s + c3 * h, tmp_, k3_);
  tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
  eval(s + c4 * h, tmp_, k4_);
  tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
  eval(s + c5 * h, tmp_, k5_);
  tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
  eval(s + h, tmp_, k6_);
  y_new = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
  Vec k7;
  eval(s + h, y_new, k7);
  tmp_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7);
  // k7 is kept aside until accept(); a rejected step must not overwrite the cache
  // used by a retry from the same point.
  k7_.swap(k7);
  pending_s_ = s + h;
  pending_y_ = y_new;
  fsal_valid_ = false;
  return scaled_rms(tmp_, y, y_new, abs_tol, rel_tol, weights);
}

void DormandPrince45::accept() {
  fsal_valid_ = true;
  fsal_s_ = pending_s_;
  fsal_y_ = pending_y_;
}

void implicit_midpoint_step(const Rhs& rhs, double s, const Vec& y, double h, Vec& y_new,
                            double tolerance, int max_iterations) {
  Vec f(y.size());
  rhs(s, y, f);
  y_new = y + h * f;
  Vec mid(y.size());
  for (int it = 0; it < max_iterations; ++it) {
    mid = 0.5 * (y + y_new);
    rhs(s + 0.5 * h, mid, f);
    Vec next = y + h * f;
    const double change = (next - y_new).lpNorm<Eigen::Infinity>();
    y_new = std::move(next);
    if (change <= tolerance * (1.0 + y_new.lpNorm<Eigen::Infinity>())) return;
  }
  throw ConvergenceError("implicit midpoint iteration did not converge", 0.0);
}

double next_step_size(double h, double error_norm, bool accepted) {
  constexpr double safety = 0.9;
  if (error_norm == 0.0) return h * 5.0;
  const double factor = safety * std::pow(error_norm, -0.2);
  if (accepted) return h * std::clamp(factor, 0.2, 5.0);
  return h * std::clamp(factor, 0.1, 0.9);
}

double initial_step_size(const Rhs& rhs, double s, const Vec& y, double direction,
                         double abs_tol, double rel_tol) {
  Vec f0(y.size());
  rhs(s, y, f0);
  const Vec scale = (abs_tol + rel_tol * y.array().abs()).matrix();
  const double d0 = std::sqrt((y.array() / scale.array()).square().mean());
  const double d1 = std::sqrt((f0.array() / scale.array()).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  Vec y1 = y + direction * h0 * f0;
  Vec f1(y.size());
  rhs(s + direction * h0, y1, f1);
  const double d2 = std::sqrt(((f1 - f0).array() / scale.array()).square().mean()) / h0;
  const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 0.2);
  return std::min(100.0 * h0, h1);
}

StepStats integrate_adaptive(const Rhs& rhs, double s0, Vec& y, double s1,
                             const AdaptiveOptions& options,
                             const std::vector<double>& breakpoints,
                             const StepObserver& observer, const Vec* weights) {
  StepStats stats;
  if (s1 == s0) return stats;
  const double direction = s1 > s0 ? 1.0 : -1.0;

  std::vector<double> targets;
  for (double b : breakpoints)
    if ((b - s0) * direction > 0.0 && (s1 - b) * direction > 0.0) targets.push_back(b);
  std::sort(targets.begin(), targets.end(),
            [direction](double a, double b) { return a * direction < b * direction; });
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  targets.push_back(s1);

  DormandPrince45 stepper(rhs);
  double proposal = options.initial_step > 0.0
                        ? options.initial_step
                        : initial_step_size(rhs, s0, y, direction, options.abs_tol,
                                            options.rel_tol);
  proposal = std::min(proposal, options.max_step);
  double s = s0;
  Vec y_new(y.size());
  std::size_t next = 0;
  while (next < targets.size()) {
    if (stats.accepted + stats.rejected > options.max_steps)
      throw ConvergenceError("step budget exhausted in adaptive integration", s);
    const double remaining = (targets[next] - s) * direction;
    const bool lands = proposal >= remaining * (1.0 - 1e-12);
    const double h = direction * (lands ? remaining : proposal);
    const double err =
        stepper.step(s, y, h, y_new, options.abs_tol, options.rel_tol, weights);
    if (!std::isfinite(err)) {
      proposal *= 0.25;
      ++stats.rejected;
      if (proposal < options.min_step)
        throw ConvergenceError("non-finite state in adaptive integration", s);
      continue;
    }
    if (err <= 1.0) {
      stepper.accept();
      s = lands ? targets[next] : s + h;
      y.swap(y_new);
      ++stats.accepted;
      const double grown = std::abs(next_step_size(h, err, true));
      proposal = std::min(lands ? std::max(proposal, grown) : grown, options.max_step);
      if (observer) observer(s, y, lands);
      if (lands) ++next;
    } else {
      ++stats.rejected;
      proposal = std::abs(next_step_size(h, err, false));
      if (proposal < options.min_step)
        throw ConvergenceError("step size underflow in adaptive integration", err);
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Quadrature

namespace {

constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Interval {
  double a, b, value, error;
  bool operator<(const Interval& other) const { return error < other.error; }
};

Interval kronrod15(const std::function<double(double)>& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kWgk[j] * sum;
    if (j % 2 == 1) gauss += kWg[j / 2] * sum;
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace

QuadratureResult gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                               double abs_tol, double rel_tol, int max_intervals) {
  std::priority_queue<Interval> heap;
  Interval first = kronrod15(f, a, b);
  double value = first.value, error = first.error;
  heap.push(first);
  int evaluations = 15;
  while (error > std::max(abs_tol, rel_tol * std::abs(value)) &&
         static_cast<int>(heap.size()) < max_intervals) {
    Interval worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    Interval left = kronrod15(f, worst.a, mid);
    Interval right = kronrod15(f, mid, worst.b);
    evaluations += 30;
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // Re-sum to shed the drift of the running updates.
  double total = 0.0, total_error = 0.0;
  const int intervals = static_cast<int>(heap.size());
  while (!heap.empty()) {
    total += heap.top().value;
    total_error += heap.top().error;
    heap.pop();
  }
  return {total, total_error, evaluations, intervals};
}

std::pair<Vec, Vec> gauss_legendre(int points, double a, double b) {
  Mat jacobi = Mat::Zero(points, points);
  for (int k = 1; k < points; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = beta;
    jacobi(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(jacobi);
  Vec nodes = solver.eigenvalues();
  Vec weights = 2.0 * solver.eigenvectors().row(0).transpose().array().square();
  nodes = (0.5 * (b - a) * nodes.array() + 0.5 * (a + b)).matrix();
  weights *= 0.5 * (b - a);
  return {nodes, weights};
}

// ---------------------------------------------------------------------------
// Extrapolation

namespace {

Mat inverse_radius_design(std::span<const double> radii, int order) {
  if (order < 0 || static_cast<std::size_t>(order + 1) > radii.size())
    throw DomainError("extrapolation order needs at least order + 1 samples");
  const double r0 = radii.front();
  Mat design(static_cast<Eigen::Index>(radii.size()), order + 1);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const double h = r0 / radii[i];
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
      design(static_cast<Eigen::Index>(i), j) = p;
      p *= h;
    }
  }
  return design;
}

}  // namespace

LimitFit limit_in_inverse_radius(std::span<const double> radii, std::span<const double> values,
                                 int order) {
  const Mat design = inverse_radius_design(radii, order);
  Vec rhs = Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
  const Vec c = design.colPivHouseholderQr().solve(rhs);
  LimitFit fit;
  fit.limit = c(0);
  fit.coefficients.resize(order);
  double scale = 1.0;
  for (int j = 1; j <= order; ++j) {
    scale *= radii.front();
    fit.coefficients(j - 1) = c(j) * scale;
  }
  return fit;
}

Vec limit_in_inverse_radius(std::span<const double> radii, const std::vector<Vec>& values,
                            int order) {
  const Mat design = inverse_radius_design(radii, order);
  const auto qr = design.colPivHouseholderQr();
  const Eigen::Index dim = values.front().size();
  Mat samples(static_cast<Eigen::Index>(values.size()), dim);
  for (std::size_t i = 0; i < values.size(); ++i)
    samples.row(static_cast<Eigen::Index>(i)) = values[i].transpose();
  return qr.solve(samples).row(0).transpose();
}

Mat limit_in_inverse_radius(std::span<const double> radii, const std::vector<Mat>& values,
                            int order) {
  const Eigen::Index rows = values.front().rows(), cols = values.front().cols();
  std::vector<Vec> flat;
  flat.reserve(values.size());
  for (const auto& m : values) flat.push_back(Eigen::Map<const Vec>(m.data(), rows * cols));
  const Vec limit = limit_in_inverse_radius(radii, flat, order);
  return Eigen::Map<const Mat>(limit.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// Roots and sequences

double brent_root(const std::function<double(double)>& f, double a, double b, double tolerance,
                  int max_iterations) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0.0) == (fb > 0.0))
    throw ConvergenceError("root not bracketed", std::min(std::abs(fa), std::abs(fb)));
  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 0; it < max_iterations; ++it) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol = 2.0 * 2.2e-16 * std::abs(b) + 0.5 * tolerance;
    const double m = 0.5 * (c - b);
    if (std::abs(m) <= tol || fb == 0.0) return b;
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double qa = fa / fc, r = fb / fc;
        p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
        q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol ? d : (m > 0.0 ? tol : -tol);
    fb = f(b);
  }
  throw ConvergenceError("Brent iteration limit reached", std::abs(fb));
}

double radical_inverse(std::uint64_t index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

unsigned nth_prime(unsigned k) {
  unsigned count = 0;
  for (unsigned candidate = 2;; ++candidate) {
    bool prime = true;
    for (unsigned d = 2; d * d <= candidate; ++d)
      if (candidate % d == 0) {
        prime = false;
        break;
      }
    if (prime && count++ == k) return candidate;
  }
}

}  // namespace conic::numerics
