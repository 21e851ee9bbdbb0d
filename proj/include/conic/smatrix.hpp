#ifndef CONIC_SMATRIX_HPP
#define CONIC_SMATRIX_HPP

#include <string>
#include <vector>

#include "conic/sojourn.hpp"

namespace conic {

struct SMatrixOptions {
  SojournOptions sojourn;
  IncomingSeedOptions seed;
  double impact_max = 10.0;     // impact search range |b| <= impact_max
  int impact_grid = 81;         // bracketing samples along the search line
  double direction_tol = 1e-8;  // target tolerance on y_out (or on the deflection)
  double dedup_tol = 1e-6;      // impact-vector distance separating solutions
  double singular_tol = 1e-8;   // sigma at or below this is degenerate
  int max_newton = 40;
  unsigned jobs = 1;
};

struct NewtonReport {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

struct ConnectingGeodesic {
  Vec y_in;
  Vec y_out;
  Vec impact;
  TotalSojourn sojourn;  // sigma and nondegenerate filled in
  Mat dy_out_db;         // n x (n-1): derivative of y_out along the impact basis
  NewtonReport newton;
};

/// Result of a connecting-geodesic search. A degenerate family (singular Jacobian, e.g.
/// every impact connecting y_in to y_out = y_in in flat space) is reported instead of a
/// list; an empty list with degenerate == false means no connection.
struct ConnectingSearch {
  std::vector<ConnectingGeodesic> geodesics;
  bool degenerate = false;
  std::string report;
};

/// Searches impact vectors b in y_in's complement: a grid along a search line brackets
/// roots, then Newton with the variational Jacobian (bisection-safeguarded for n = 2).
ConnectingSearch find_connecting_geodesics(const Vec& y_in, const Vec& y_out,
                                           const ManifoldModel& m, double lambda0,
                                           const SMatrixOptions& options = {});

/// n = 2 only: roots of deflection(b) = target, with the deflection unwrapped (signed
/// turning of the velocity), so targets beyond pi are not folded back onto the circle.
ConnectingSearch find_connecting_geodesics_by_deflection(const Vec& y_in, double deflection,
                                                         const ManifoldModel& m,
                                                         double lambda0,
                                                         const SMatrixOptions& options = {});

struct SigmaResult {
  double sigma = 0.0;
  bool nondegenerate = false;
  Mat dy_out_db;  // n x (n-1)
};

/// sigma = |det dy_out/db| at fixed y_in, from variational frames along both ends: the
/// asymptotic maps q0 -> (y_out, b, y_in) are linearized at the extrapolation nodes,
/// extrapolated in 1/r, and restricted to the energy shell and to fixed y_in.
SigmaResult jacobian_sigma(const TotalSojourn& geo, const VariationalFrame& forward,
                           const VariationalFrame& backward, const ManifoldModel& m,
                           double lambda0, const SojournOptions& options = {},
                           double singular_tol = 1e-8);

/// Builds both frames, then as above.
SigmaResult jacobian_sigma(const TotalSojourn& geo, const ManifoldModel& m, double lambda0,
                           const SojournOptions& options = {}, double singular_tol = 1e-8);

struct SMatrixContribution {
  Vec impact;
  double sigma = 0.0;
  double tau = 0.0;
  double amplitude = 0.0;  // sigma^{-1/2} lambda^{(n-1)/2}
  double phase = 0.0;      // lambda tau
  Complex value;
};

struct SMatrixEntry {
  double lambda = 0.0;
  Vec y_in;
  Vec y_out;
  Complex value;
  std::vector<SMatrixContribution> contributions;
  // More than one contribution: relative phases depend on an unstated Maslov convention.
  bool phase_convention_sensitive = false;
};

/// Leading-order entry sum over connecting geodesics of sigma^{-1/2} lambda^{(n-1)/2}
/// e^{i lambda tau}. No Maslov phases. Throws DegenerateError for a degenerate search.
SMatrixEntry assemble_smatrix(double lambda, const ConnectingSearch& search, int n);

SMatrixEntry assemble_smatrix(double lambda, const Vec& y_in, const Vec& y_out,
                              const ManifoldModel& m, double lambda0 = 1.0,
                              const SMatrixOptions& options = {});

}  // namespace conic

#endif  // CONIC_SMATRIX_HPP
