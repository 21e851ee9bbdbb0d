#ifndef CONIC_NUMERICS_EXTRAPOLATION_HPP
#define CONIC_NUMERICS_EXTRAPOLATION_HPP

#include <span>
#include <vector>

#include "conic/types.hpp"

namespace conic::numerics {

/// Fit of f(r) = limit + c_1/r + ... + c_k/r^k through sampled (r, f) pairs.
struct LimitFit {
  double limit = 0.0;
  Vec coefficients;  // c_1 ... c_k
};

/// Least-squares fit of order `order` in 1/r; exact interpolation when
/// radii.size() == order + 1.
LimitFit limit_in_inverse_radius(std::span<const double> radii, std::span<const double> values,
                                 int order);

/// Componentwise version for vector-valued samples.
Vec limit_in_inverse_radius(std::span<const double> radii, const std::vector<Vec>& values,
                            int order);

/// Componentwise version for matrix-valued samples.
Mat limit_in_inverse_radius(std::span<const double> radii, const std::vector<Mat>& values,
                            int order);

}  // namespace conic::numerics

#endif  // CONIC_NUMERICS_EXTRAPOLATION_HPP
