#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "robustgrowth/field.hpp"

namespace rg {

// out is a row-major r x r block evaluated at (x, y)
using MatrixFn =
    std::function<void(const double* x, const double* y, double* out)>;
using VectorFn =
    std::function<void(const double* x, const double* y, double* out)>;
using DensityFn = std::function<double(const double* x, const double* y)>;

struct Box {
  std::vector<double> lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
};

// Exact derivative closures a model family may supply.  Everything here has a
// finite-difference fallback; supplying them removes discretization error from
// the averaged fields and the slice right-hand sides.
struct AnalyticHooks {
  VectorFn ell_x;  // d comps: reference drift direction for X
  VectorFn ell_y;  // m comps: reference drift direction for Y
  MatrixFn cxp;    // d*d: c_X(x,y) * p(x,y)
  std::function<void(const double* x, const double* y, int j, double* out)>
      cxp_dx;  // d/dx_j of cxp
  std::function<void(const double* x, const double* y, int j, int l,
                     double* out)>
      cxp_d2;  // d^2/dx_j dx_l of cxp
  std::function<double(const double* x)> marginal_x;  // exact p_X
};

struct ClosedFormOracle {
  std::function<double(const double* x)> phi;  // potential, fixed gauge
  std::function<void(const double* x, double* out)> theta;  // d comps
  std::optional<double> lambda;                     // at the catalog eps
  std::function<double(double eps)> lambda_of_eps;  // truncation-aware
  std::string note;
};

struct MarketModel {
  std::string name;
  int d = 1, m = 1;
  Box ebox, dbox;
  MatrixFn c_x;       // d*d SPD
  MatrixFn c_y;       // m*m SPD
  DensityFn density;  // joint invariant density on ebox x dbox
  std::shared_ptr<const AnalyticHooks> analytic;
  std::shared_ptr<const ClosedFormOracle> oracle;
};

// Tensor grid over the eps-truncated product box; n_axes lists nodes per axis
// (d + m entries, or a single entry reused for every axis).
GridPtr build_grid(const MarketModel&, const std::vector<int>& n_axes,
                   double eps);

struct CheckRow {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckRow> rows;
  bool ok() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return true;
  }
  const CheckRow* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }
};

// Positivity, symmetry, and SPD checks for the covariance evaluators, density
// positivity and total mass, and a finite-difference smoothness proxy.
// Throws EvaluatorFailure on non-finite evaluator output.
ValidationReport validate_model(const MarketModel&, const GridPtr&);

// smallest eigenvalue of a row-major symmetric r x r block
double sym_min_eig(const double* a, int r);
// SPD solve b := a^{-1} b for small r (used for drift assembly)
void spd_solve_inplace(const double* a, int r, double* b);

}  // namespace rg
