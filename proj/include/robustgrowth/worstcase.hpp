#pragma once

#include <utility>

#include "robustgrowth/averaging.hpp"
#include "robustgrowth/growth.hpp"

namespace rg {

// Covariance deformation that interpolates between c_X and its flattened
// average A / (p |D|):
//   ctilde = eta c_X + (1 - eta) A / (p |D|)
// with eta a tensor product of quintic smoothstep ramps, identically one on
// the inner box K and zero outside the outer box V.  Because eta depends on
// x only, int ctilde p dy = A for every x: the averaged problem, its
// potential and its growth rate are all untouched.
struct KModification {
  Box k_box, v_box;
  GridPtr grid;     // full product grid
  Field eta;        // endo grid scalar in [0, 1]
  Field deta;       // endo grid, d comps: axis partials of eta
  Field d2eta;      // endo grid, d comps: repeated-axis second partials
  Field p;          // full grid: joint density values
  Field ctilde;     // full grid, d*d
  Field elltilde;   // full grid, d comps: (1/2) (ctilde p)^{-1} div_x(ctilde p)
  double d_volume = 0.0;
  double preservation = 0.0;  // worst relative defect of int ctilde p dy vs A
};

// Throws BadNesting unless axis.a() <= v_lo <= k_lo <= k_hi <= v_hi <= axis.b()
// on every endogenous axis (equalities allowed: coinciding boxes degenerate
// to a sharp cutoff that the grid never samples inside an open ramp).
KModification build_k_modification(const MarketModel&, const AveragedFields&,
                                   const GridPtr& g, const Box& k_box,
                                   const Box& v_box);

// Degenerate corners of the family: eta identically one leaves c_X
// unchanged, eta identically zero flattens it everywhere.
KModification identity_modification(const MarketModel&, const AveragedFields&,
                                    const GridPtr& g);
KModification uniform_modification(const MarketModel&, const AveragedFields&,
                                   const GridPtr& g);

// Right-hand side of the y-slice problem at one endogenous node:
//   f = div_x( (1/2) div_x(ctilde p) - (ctilde p) grad phi )
// as a scalar field on the exogenous grid.  The slice mean must vanish for
// solvability under zero-flux ends; the raw quadrature mean is reported
// through raw_mean and removed exactly, and MeanNotZero is thrown when it
// exceeds 1e-6 * |f|_inf (plus a rounding floor for identically zero slices).
Field slice_rhs(const MarketModel&, const AveragedFields&, const KModification&,
                const PhiSolution&, std::int64_t endo_node,
                double* raw_mean = nullptr);

struct SliceDiag {
  double j_value = 0.0;        // (1/2) int (du-xi)^T a (du-xi) + int f u
  double wnorm_lhs = 0.0;      // sqrt( int du^T a du )
  double wnorm_rhs = 0.0;      // (2 Diam / pi) |f / sqrt(w)|_2 + 2 |xi|_a
  double f_mean_raw = 0.0;     // slice mean of f before exact removal
  double weak_residual = 0.0;  // discrete defect of the slice equation
  std::int64_t iterations = 0; // conjugate-gradient count (0 when closed form)
  bool bound_ok = true;        // wnorm_lhs <= wnorm_rhs within bound_slack
};

// Zero-flux, zero-weighted-mean solve of  div_y(a (grad u - xi)) = f  on one
// slice.  In one exogenous variable the flux a(u' - xi) is the cumulative
// integral of f and the solve is a pair of quadratures; in higher dimension
// the weak system D^T W_a D u = D^T W_a xi - W f is solved by conjugate
// gradient on the zero-mean subspace.  Throws SingularSlice when a loses
// positive definiteness on the slice.
struct SliceSolution {
  Field u;     // exo grid scalar, zero mean against the weight w = lambda_min(a)
  Field du;    // exo grid, m comps
  Field flux;  // exo grid, m comps: a (du - xi)
  SliceDiag diag;
};
SliceSolution solve_v_slice(const Field& a, const Field& xi, const Field& f);

// Full worst-case correction: every x-slice solved (in parallel), results
// reassembled on the product grid.
struct VSolution {
  GridPtr grid;
  Field vhat;         // full grid scalar
  Field grad_y_vhat;  // full grid, m comps
  Field fx;           // full grid scalar: slice right-hand sides
  Field flux;         // full grid, m comps: a (grad vhat - xi)
  Field a;            // full grid, m*m: c_Y p
  Field xi;           // full grid, m comps: reference drift direction for Y
  Field w;            // full grid scalar: lambda_min(a)
  std::vector<SliceDiag> slices;  // one per endogenous node
  double j_total = 0.0;           // endo-weighted sum of slice objectives
  double rho = 0.0;  // worst axis-wise midpoint-concavity margin of w^{1/k}
  int k = 1;         // smallest power in {1, 2, 4} certifying concavity
  int bound_failures = 0;  // slices whose a-priori bound check failed
};
VSolution solve_vhat(const MarketModel&, const AveragedFields&,
                     const KModification&, const PhiSolution&);

// Worst-case drift correction on the product grid, d + m comps:
//   beta_X = ctilde (grad phi - elltilde),   beta_Y = c_Y (grad vhat - ell_Y).
// div(p beta) = 0 holds weakly by construction.
Field assemble_beta(const KModification&, const VSolution&, const PhiSolution&);

// Weak divergence defect of a vector field against a library of compactly
// supported product bumps with closed-form gradients:
//   max over bumps of | int grad u . beta p | / (|beta|_{L2(p)} |grad u|_{L2(p)}).
double div_free_residual(const Field& beta, const Field& p, int n_bumps = 8);

// Candidate identity for the unmodified one-factor gradient case:
//   lhs = int (grad vhat - ell_Y)^T c_Y (grad vhat - ell_Y) p,
//   rhs = int f^2 / (lambda_min(c_Y) p).
// Requires m = 1 and a gradient-case potential (WrongSetting otherwise);
// pass means the relative gap is below m1_tol = 2e-2.
struct M1Identity {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;  // |lhs - rhs| / max(lhs, rhs)
  bool pass = false;
};
M1Identity check_m1_identity(const MarketModel&, const GridPtr& g,
                             const AveragedFields&, const PhiSolution&);

// Weighted Poincare pair for a zero-flux slice weight: lhs is the w-weighted
// deviation norm of u, rhs the matching gradient bound (2 Diam / pi) |du|_w.
// du carries one component per axis of u's grid.
std::pair<double, double> weighted_poincare(const Field& w, const Field& u,
                                            const Field& du);

}  // namespace rg
