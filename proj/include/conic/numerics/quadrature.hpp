#ifndef CONIC_NUMERICS_QUADRATURE_HPP
#define CONIC_NUMERICS_QUADRATURE_HPP

#include <functional>
#include <utility>

#include "conic/types.hpp"

namespace conic::numerics {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
  int intervals = 0;
};

/// Globally adaptive Gauss-Kronrod (7, 15) quadrature on [a, b].
/// Interior nodes only, so integrable endpoint behaviour is never sampled.
QuadratureResult gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                               double abs_tol, double rel_tol, int max_intervals = 4000);

/// Gauss-Legendre nodes and weights on [a, b] (Golub-Welsch).
std::pair<Vec, Vec> gauss_legendre(int points, double a = -1.0, double b = 1.0);

}  // namespace conic::numerics

#endif  // CONIC_NUMERICS_QUADRATURE_HPP
