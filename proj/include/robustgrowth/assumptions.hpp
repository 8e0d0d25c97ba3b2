#pragma once

#include <array>
#include <string>
#include <vector>

#include "robustgrowth/averaging.hpp"
#include "robustgrowth/examples.hpp"
#include "robustgrowth/model.hpp"

namespace rg {

// One integrability probe evaluated on successively tighter box truncations.
struct SweepValues {
  std::string name;
  std::array<double, 3> value{};  // at eps, eps/2, eps/4
  double rel_change = 0.0;        // between the last two values
  double trend = 0.0;             // log2 ratio of successive differences
  bool stable = false;            // finite and settling under truncation
};

struct AssumptionReport {
  double k = 1.0;           // exponent applied to the slice weight
  double rho_margin = 0.0;  // worst midpoint concavity margin of the root
  bool concave = false;
  std::vector<SweepValues> integrals;
  // energy schedule entries, filled for one-dimensional models only
  std::vector<int> energy_n;
  std::vector<double> energy_phi, energy_psi;
  bool energies_decreasing = false;

  bool ok() const {
    if (!concave) return false;
    for (const auto& s : integrals)
      if (!s.stable) return false;
    return true;
  }
};

// Concavity of (lambda_min(c_Y) p)^{1/k} in y at sampled x, truncation
// sweeps of the integrability conditions the solver relies on, and the
// cutoff-function energies for one-dimensional models.  k_exponent <= 0
// picks the smallest certifying power from {1, 2, 4}.  Pure; failures are
// report entries rather than exceptions.
AssumptionReport audit_assumptions(const MarketModel&, const AveragedFields&,
                                   double k_exponent);

struct EnergyTable {
  std::vector<int> n;
  std::vector<double> e_phi;  // int phi_n'^2 A dx
  std::vector<double> e_psi;  // int psi_n'^2 B dy
  bool phi_decreasing = false;
  bool psi_decreasing = false;
};

// Energies of mollified plateau cutoffs on the asset and factor axes; the
// sequences must decay for the growth problem to be well posed, and fail to
// decay when the averaged covariance stays bounded away from zero at the
// boundary.  Throws WrongSetting unless both axes are one dimensional and
// ResolutionTooCoarse when the stored fields cannot resolve the cutoff ramp.
EnergyTable test_function_energies(const AveragedFields&,
                                   const std::vector<int>& n_schedule);

}  // namespace rg
