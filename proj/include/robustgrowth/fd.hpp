#pragma once

#include "robustgrowth/field.hpp"

namespace rg {

// First derivative along one axis: central differences in the interior,
// 3-point one-sided stencils at the truncated-box faces.
void diff_axis(const Field& u, int uc, int axis, Field& out, int oc);
Field diff_axis(const Field& u, int uc, int axis);

// Accumulate the adjoint: out_c += D_axis^T v_c (same stencils as diff_axis).
void diff_axis_adjoint_add(const Field& v, int vc, int axis, Field& out, int oc);

// Gradient over a contiguous axis range (defaults to all axes): out has
// `count` components, component j = d/dx_{first+j}.
Field gradient(const Field& u, int first_axis, int count);
Field gradient(const Field& u);

// Second derivative along one axis (central; one-sided at faces).
void diff2_axis(const Field& u, int uc, int axis, Field& out, int oc);

// Matrix-free discrete divergence-form operator  M = D^T W_A D  built from
// per-node SPD blocks A_k scaled by quadrature weights, with D the stacked
// per-axis difference operators.  ker(M) is the constants.
struct DivFormOperator {
  const Field* A = nullptr;   // nc = r*r blocks on the same grid as u
  GridPtr g;
  int r = 0;

  void apply(const std::vector<double>& u, std::vector<double>& out) const;
  // rhs_k = D^T W_A gamma for a given nodal vector field gamma (nc = r).
  std::vector<double> rhs(const Field& gamma) const;
};

struct CgResult {
  std::int64_t iterations = 0;
  double residual = 0.0;     // final ||Mx-b||_2
  double rhs_norm = 0.0;
  bool converged = false;
};

// Conjugate gradient restricted to the zero-mean subspace (the operator's
// kernel is the constants).  Throws NoConvergence when maxit is exhausted.
CgResult cg_zero_mean(const DivFormOperator& op, const std::vector<double>& b,
                      std::vector<double>& x, double tol, std::int64_t maxit);

}  // namespace rg
