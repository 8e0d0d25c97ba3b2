#pragma once

#include "robustgrowth/averaging.hpp"
#include "robustgrowth/fd.hpp"

namespace rg {

struct GradientCheck {
  bool gradient = false;
  Field G;  // A^{-1} div A on the endo grid, d comps
  Field h;  // potential with grad h = G (meaningful when gradient is true)
  double curl_max = 0.0;
  double curl_floor = 0.0;        // central-difference truncation floor
  double path_consistency = 0.0;  // max difference between integration orders
};

// Decide whether G = A^{-1} div A is a gradient field.  The discrete curl of
// an exact gradient sampled on a grid is O(h^2), so the acceptance threshold
// is the larger of curl_tol * max(1, |G|_inf) and the truncation floor.
GradientCheck detect_gradient_case(const Field& A, const Field& divA,
                                   double curl_tol = 1e-6);

struct SolveOptions {
  bool force_iterative = false;
  double cg_tol = 1e-10;
  std::int64_t max_iter = 0;  // 0 means ten times the node count
};

struct PhiSolution {
  Field phi;   // endo grid scalar, quadrature mean zero
  Field grad_phi;  // endo grid, d comps
  double lambda = 0.0;
  double energy = 0.0;    // variational objective at the solution
  double residual = 0.0;  // norm of the discrete stationarity defect
  std::int64_t iterations = 0;
  std::string method;  // 1d-closed-form | gradient-case | fd-solve
};

// Maximizer of the robust growth functional over potentials: in one variable
// phi = (1/2) log A; when the drift direction is a gradient, phi = h/2; else
// the discrete Euler-Lagrange system div(A(grad phi - gamma)) = 0 with
// gamma = (1/2) A^{-1} div A is solved by conjugate gradient on the
// zero-mean subspace.
PhiSolution solve_phi(const Field& A, const Field& divA,
                      const SolveOptions& = {});
PhiSolution solve_phi(const AveragedFields&, const SolveOptions& = {});

// (1/2) int grad^T A grad over the endo box
double growth_rate(const Field& grad, const Field& A);

// int (gamma - grad phi)^T A (gamma - grad phi), gamma = (1/2) A^{-1} div A
double variational_energy(const Field& phi, const Field& A, const Field& divA);
double variational_energy(const Field& phi, const Field& A);

// Directional derivative of the energy at a solution in direction psi,
// evaluated with the solution's stored gradient.
double energy_gateaux(const PhiSolution&, const Field& psi, const Field& A,
                      const Field& divA);

// Growth functional in integration-by-parts form:
//   -(1/2) int Tr(A (hess phi + grad phi grad phi^T)).
// Potentials whose gradient reaches the truncated faces are tapered to the
// interior first (the identity assumes compactly supported variations).
double ibp_growth_functional(const Field& phi, const Field& A);

// (1/8) int divA^T A^{-1} divA: the growth constant when the drift
// direction is a gradient field.
double divergence_quadratic(const Field& A, const Field& divA);

// Portfolio map: interpolated gradient at x.
void strategy_weights(const PhiSolution&, const double* x, double* theta);

}  // namespace rg
