#ifndef CONIC_NUMERICS_ROOTS_HPP
#define CONIC_NUMERICS_ROOTS_HPP

#include <cstdint>
#include <functional>

namespace conic::numerics {

/// Brent-Dekker root of f on a sign-changing bracket [a, b].
/// Throws ConvergenceError when f(a), f(b) do not bracket a root.
double brent_root(const std::function<double(double)>& f, double a, double b,
                  double tolerance = 1e-15, int max_iterations = 300);

/// Radical inverse of `index` in `base` (Halton coordinate).
double radical_inverse(std::uint64_t index, unsigned base);

/// The k-th prime (k = 0 gives 2), for Halton bases.
unsigned nth_prime(unsigned k);

}  // namespace conic::numerics

#endif  // CONIC_NUMERICS_ROOTS_HPP
