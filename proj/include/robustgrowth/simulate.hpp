#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "robustgrowth/averaging.hpp"
#include "robustgrowth/growth.hpp"
#include "robustgrowth/model.hpp"
#include "robustgrowth/worstcase.hpp"

namespace rg {

struct SimConfig {
  double T = 100.0;
  double dt = 1e-3;
  int n_paths = 16;
  std::uint64_t seed = 1;
  std::string boundary_policy = "reflect";  // or "reject-and-halve"
  std::vector<double> initial;              // d + m entries; empty = box center
  int hist_bins = 50;
  std::int64_t thin = 0;  // record every thin-th state per path; 0 = none
};

// Portfolio weight evaluator; y is passed so factor-aware competitors can be
// simulated even though the optimal strategy ignores it.
struct Strategy {
  std::string name;
  std::function<void(const double* x, const double* y, double* theta)> eval;
};

struct Observable {
  std::string name;
  std::function<double(const double* x, const double* y)> eval;
};

struct StrategyStats {
  std::string name;
  std::vector<double> log_v;  // terminal log wealth per path
  std::vector<double> qv;     // terminal quadratic variation per path
  double g_hat = 0.0;         // mean of log_v / T
  double se = 0.0;            // standard error over paths
};

struct SimResult {
  double T = 0.0, dt = 0.0;
  std::int64_t n_steps = 0;
  std::vector<StrategyStats> strategies;
  std::vector<std::string> observable_names;
  std::vector<std::vector<double>> time_averages;  // [observable][path]
  // per-coordinate occupation counts over hist_bins equal bins of the
  // truncated axis; integer-valued, summing exactly to n_steps * n_paths
  std::vector<std::vector<std::int64_t>> histograms;
  std::vector<std::vector<double>> thinned;  // [path], step-major states
  double reject_fraction = 0.0;
  std::string warning;  // set when the horizon is too short for ergodics
};

// Normalized histogram (unit mass) for one coordinate.
std::vector<double> histogram_density(const SimResult&, int coordinate);

// Total-variation distance between a histogram and the bin masses of a
// reference density field on the same axis.
double histogram_tv(const SimResult&, int coordinate, const Field& density,
                    int component);

// Euler scheme for the reference dynamics: drift c ell interpolated from the
// stored fields, diffusion evaluated exactly, symmetric PSD square root per
// step.  Paths are independent with seeds derived from config.seed; results
// are bitwise reproducible for a fixed config regardless of thread count.
// Throws BadConfig on invalid config, OutOfDomain for an initial state off
// the truncated box, StepRejectionOverflow when reject-and-halve discards
// more than half of all attempted steps.
SimResult simulate_reference(const MarketModel&, const DriftFields&,
                             const SimConfig&,
                             const std::vector<Strategy>& strategies = {},
                             const std::vector<Observable>& observables = {});

// Euler scheme for the deformed worst-case dynamics: asset drift
// ctilde grad_phi, factor drift c_Y grad v recovered from the stored flux.
// Wealth accounting uses the deformed covariance.
SimResult simulate_worst_case(const MarketModel&, const KModification&,
                              const PhiSolution&, const VSolution&,
                              const SimConfig&,
                              const std::vector<Strategy>& strategies = {},
                              const std::vector<Observable>& observables = {});

// Log wealth series of a strategy along one recorded full-resolution path
// (thin = 1); kmod may be null for undeformed dynamics.
std::vector<double> wealth_path(const MarketModel&,
                                const std::vector<double>& path, double dt,
                                const Strategy&, const KModification* kmod);

// Gap at the horizon between the step-rule log wealth of the optimal
// strategy and its generating-function form (potential difference minus a
// time integral); first-order in dt along a fixed path.
double master_formula_gap(const MarketModel&, const std::vector<double>& path,
                          double dt, const PhiSolution&,
                          const KModification* kmod);

struct GrowthRow {
  std::string name;
  double g_hat = 0.0, se = 0.0;
  int n_paths = 0;
  double gap_to_lambda = 0.0;
  bool within_tolerance = false;  // |g_hat - lambda| <= max(3 se, 5% lambda)
};

struct GrowthTable {
  std::vector<GrowthRow> rows;
};

// Collates per-strategy growth estimates across runs and flags agreement
// with the predicted rate.  Throws BadConfig when a run has fewer than 16
// paths.
GrowthTable estimate_growth(const std::vector<const SimResult*>& results,
                            double lambda);

}  // namespace rg
