#pragma once

#include "robustgrowth/model.hpp"

namespace rg {

// Fields obtained by integrating the covariance blocks against the invariant
// density over the opposite box.
struct AveragedFields {
  Field A;      // endo grid, d*d: int c_X p dy
  Field divA;   // endo grid, d:   (div A)_i = sum_j d/dx_j A_ij
  Field A2xx;   // endo grid, scalar second derivative of A; populated only
                // for d = 1 models with exact second-derivative closures
  Field pX;     // endo grid, scalar marginal
  Field cbar;   // endo grid, d*d: A / pX
  Field B;      // exo grid, m*m:  int c_Y p dx
  double d_volume = 0.0;  // quadrature volume of the exogenous box
};

// One pass over the full grid; uses exact derivative closures for divA when
// the model supplies them, central differences of A otherwise.
// Throws QuadratureOverflow on non-finite accumulation and
// DivideByZeroDensity when the marginal vanishes on the grid.
AveragedFields average_fields(const MarketModel&, const GridPtr& g);

// Reference-dynamics drift directions on the full grid.
struct DriftFields {
  Field ell_x;  // full grid, d
  Field ell_y;  // full grid, m
};
DriftFields drift_fields(const MarketModel&, const GridPtr& g);

}  // namespace rg
