#pragma once

#include "robustgrowth/model.hpp"

namespace rg {

// Two-sided Beta family on E = D = [0,1]:
//   c_X = sigma^2 x^b1 (1-x)^b2 (x+y)^q1 (2-x-y)^q2
//   c_Y = y^beta1 (1-y)^beta2
//   p   = Beta(a1,a2)(x) * Beta(alpha1,alpha2)(y)
struct BetaParams {
  double sigma = 1.0;
  double a1 = 2.0, a2 = 2.0;
  double b1 = 1.0, b2 = 1.0;
  double q1 = 1.0, q2 = 1.0;
  double alpha1 = 2.0, alpha2 = 2.0;
  double beta1 = 1.0, beta2 = 1.0;
};

// Names of violated admissibility constraints (empty means admissible).
std::vector<std::string> check_beta_params(const BetaParams&);
// Throws ParamViolation when the constraints fail.  The closed-form oracle is
// attached when q1 = q2 = 1 or q1 = q2 = 0.
MarketModel beta_model(const BetaParams&);

// d = 1 instance whose covariance depends on y only:
//   c_X = 1 + y^2, p_X = Beta(3,3), c_Y = y(1-y), p_Y = Beta(2,2).
// The optimal potential is (1/2) log p_X.
MarketModel exogenous_model();

// d = 2 separable instance with c_X = diag(1+x1, 1),
// p_X = Beta(3,3) x Beta(3,3), c_Y = y(1-y), p_Y = Beta(2,2).
// The drift direction is an exact gradient field.
MarketModel tractable_model();

struct CatalogEntry {
  std::string name;
  std::string summary;
  std::function<MarketModel()> build;
  std::vector<int> grid;  // reference resolution per axis
  double eps = 1e-3;
  std::vector<double> k_lo, k_hi, v_lo, v_hi;  // admissible-class boxes
};

const std::vector<CatalogEntry>& catalog();
const CatalogEntry* find_example(const std::string& name);

double log_beta(double a, double b);  // log B(a,b) via lgamma

}  // namespace rg
