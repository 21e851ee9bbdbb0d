#ifndef CONIC_TYPES_HPP
#define CONIC_TYPES_HPP

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

namespace conic {

/// Largest manifold dimension supported by the automatic-differentiation kernels.
inline constexpr int kMaxDim = 8;
/// Derivative capacity: phase space (z, zeta) has 2n coordinates.
inline constexpr int kMaxDerivatives = 2 * kMaxDim;

template <typename Scalar>
using VecT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vec = VecT<double>;
using Mat = MatT<double>;
using Complex = std::complex<double>;

// Forward-mode derivative scalars. Derivative storage has fixed capacity so the
// flow right-hand sides do not touch the heap per arithmetic operation.
using DerivativeVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDerivatives, 1>;
using Dual = Eigen::AutoDiffScalar<DerivativeVec>;
using DualDerivativeVec = Eigen::Matrix<Dual, Eigen::Dynamic, 1, 0, kMaxDerivatives, 1>;
using Dual2 = Eigen::AutoDiffScalar<DualDerivativeVec>;

inline constexpr double kPi = 3.14159265358979323846;

inline double value_of(double v) { return v; }
inline double value_of(const Dual& v) { return v.value(); }
inline double value_of(const Dual2& v) { return v.value().value(); }

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model specification or a model that fails validation.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a chart, kernel or formula.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A bicharacteristic entered the guard ball around a singular potential.
class GuardRadiusError : public Error {
 public:
  using Error::Error;
};

/// A trajectory failed to escape within its budget where escape was required.
class TrappedError : public Error {
 public:
  using Error::Error;
};

class DerivativeError : public Error {
 public:
  using Error::Error;
};

/// Iterative solve (shooting, Newton, bisection) did not converge.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Limit extrapolation residual exceeded its tolerance.
class ExtrapolationError : public Error {
 public:
  ExtrapolationError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Conjugate point or vanishing Jacobi determinant.
class CausticError : public Error {
 public:
  using Error::Error;
};

/// A degenerate connecting family was met where nondegeneracy is required.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Asymptotic direction bookkeeping disagrees with the incoming-direction convention.
class ConventionError : public Error {
 public:
  using Error::Error;
};

}  // namespace conic

#endif  // CONIC_TYPES_HPP
