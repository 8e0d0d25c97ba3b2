#include "robustgrowth/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robustgrowth/errors.hpp"
#include "robustgrowth/fd.hpp"

namespace rg {

namespace {

// antiderivative of the normalized quartic bump (15/16)(1-s^2)^2 on [-1, 1]
double bump_cdf(double s) {
  if (s <= -1.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return (15.0 / 16.0) * (s - (2.0 / 3.0) * s * s * s +
                          s * s * s * s * s / 5.0) +
         0.5;
}

// derivative of the mollified plateau cutoff in the unit variable r: the
// ramp slopes n on [1/n, 2/n] and -n on [1-2/n, 1-1/n] smoothed by a bump
// supported on (-1/(2n), 1/(2n))
double cutoff_slope(double r, int n) {
  const double delta = 0.5 / n;
  const double up = bump_cdf((r - 1.0 / n) / delta) -
                    bump_cdf((r - 2.0 / n) / delta);
  const double down = bump_cdf((r - (1.0 - 2.0 / n)) / delta) -
                      bump_cdf((r - (1.0 - 1.0 / n)) / delta);
  return n * (up - down);
}

// trapezoid energy of the cutoff against an axis profile interpolated from
// a one-dimensional field; the cutoff is built on the untruncated box, where
// the construction lives, and the profile interpolation clamps at the
// truncated edges where the cutoff has already vanished
double cutoff_energy(const Field& prof, int n) {
  const Axis& ax = prof.g->axes[0];
  const double lo = ax.lo, W = ax.hi - ax.lo;
  const std::int64_t nn = 20001;
  const double h = W / static_cast<double>(nn - 1);
  double acc = 0.0;
  for (std::int64_t i = 0; i < nn; ++i) {
    const double x = lo + h * static_cast<double>(i);
    const double du = cutoff_slope((x - lo) / W, n) / W;
    const double w = (i == 0 || i == nn - 1) ? 0.5 * h : h;
    acc += w * du * du * interp(prof, 0, &x);
  }
  return acc;
}

bool decreasing_from(const std::vector<int>& n, const std::vector<double>& e) {
  for (std::size_t i = 0; i + 1 < n.size(); ++i)
    if (n[i] >= 8 && !(e[i + 1] < e[i])) return false;
  return !n.empty();
}

// worst midpoint concavity margin of v along each axis line of its grid
double midpoint_margin(const Field& v) {
  const GridPtr& g = v.g;
  double worst = std::numeric_limits<double>::infinity();
  std::vector<int> idx(g->dim());
  for (int a = 0; a < g->dim(); ++a) {
    const std::int64_t s = g->strides[a];
    const std::int64_t na = g->axes[a].n;
    for (std::int64_t k = 0; k < g->n_nodes; ++k) {
      g->unflat(k, idx.data());
      if (idx[a] == 0 || idx[a] == na - 1) continue;
      const double m =
          v.at(k) - 0.5 * (v.at(k - s) + v.at(k + s));
      worst = std::min(worst, m);
    }
  }
  return worst;
}

struct SweepAccum {
  double i3_div = 0.0, i3_drift = 0.0, i3_lin = 0.0, i3_tr = 0.0,
         i3_const = 0.0;
  double ell_c_ell = 0.0, div_flux = 0.0;
};

// one truncation level: builds the grid, evaluates the drift machinery and
// reports the integrability probes
SweepAccum sweep_level(const MarketModel& mm, const std::vector<int>& n_axes,
                       double eps) {
  const int d = mm.d, m = mm.m;
  auto g = build_grid(mm, n_axes, eps);
  auto ge = endo_grid(g);
  auto gd = exo_grid(g);
  const std::int64_t nd = gd->n_nodes;
  DriftFields df = drift_fields(mm, g);

  Field U = make_field(g, d);       // c_X ell_X
  Field Up = make_field(g, d);      // c_X ell_X p
  Field logp = make_field(g, 1);
  Field lam = make_field(g, 1);     // lambda_min(c_Y)
  Field trc = make_field(g, 1);     // Tr(c_X)
  Field pf = make_field(g, 1);
  Field lcl = make_field(g, 1);     // ell^T c ell p
  std::vector<double> z(d + m), cx(d * d), cy(m * m);
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    g->coords(k, z.data());
    const double* x = z.data();
    const double* y = z.data() + d;
    mm.c_x(x, y, cx.data());
    mm.c_y(x, y, cy.data());
    const double p = mm.density(x, y);
    pf.at(k) = p;
    logp.at(k) = std::log(p);
    lam.at(k) = sym_min_eig(cy.data(), m);
    double tr = 0.0;
    for (int i = 0; i < d; ++i) tr += cx[i * d + i];
    trc.at(k) = tr;
    double qx = 0.0;
    for (int i = 0; i < d; ++i) {
      double v = 0.0;
      for (int j = 0; j < d; ++j) v += cx[i * d + j] * df.ell_x.at(k, j);
      U.at(k, i) = v;
      Up.at(k, i) = v * p;
      qx += v * df.ell_x.at(k, i);
    }
    double qy = 0.0;
    for (int i = 0; i < m; ++i) {
      double v = 0.0;
      for (int j = 0; j < m; ++j) v += cy[i * m + j] * df.ell_y.at(k, j);
      qy += v * df.ell_y.at(k, i);
    }
    lcl.at(k) = (qx + qy) * p;
  }

  Field divU = make_field(g, 1), divUp = make_field(g, 1);
  Field glogp = make_field(g, d);
  for (int a = 0; a < d; ++a) {
    Field t = diff_axis(U, a, a);
    Field tp = diff_axis(Up, a, a);
    diff_axis(logp, 0, a, glogp, a);
    for (std::int64_t k = 0; k < g->n_nodes; ++k) {
      divU.at(k) += t.at(k);
      divUp.at(k) += tp.at(k);
    }
  }

  SweepAccum out;
  out.ell_c_ell = quad_sum(lcl);
  out.div_flux = quad_sum(divUp);

  // fixed-asset-state factor integrals, maximized over sampled interior
  // states; the sample locations are tied to the untruncated box so the
  // truncation sweep probes the factor integral at the same states
  const int per_axis = d == 1 ? 33 : 6;
  std::vector<std::int64_t> samples;
  std::int64_t total = 1;
  for (int a = 0; a < d; ++a) total *= per_axis;
  for (std::int64_t t = 0; t < total; ++t) {
    std::int64_t r = t, e = 0;
    for (int a = d - 1; a >= 0; --a) {
      const int ia = static_cast<int>(r % per_axis);
      r /= per_axis;
      const Axis& ax = ge->axes[a];
      const double xs = ax.lo + (ia + 0.5) / per_axis * (ax.hi - ax.lo);
      std::int64_t j = std::llround((xs - ax.a()) / ax.h);
      j = std::clamp<std::int64_t>(j, 0, ax.n - 1);
      e += j * ge->strides[a];
    }
    samples.push_back(e);
  }
  for (std::int64_t e : samples) {
    double sdiv = 0.0, sdrift = 0.0, slin = 0.0, str = 0.0, sone = 0.0;
    for (std::int64_t q = 0; q < nd; ++q) {
      const std::int64_t k = e * nd + q;
      const double wq = gd->wq[q];
      const double pil = pf.at(k) / lam.at(k);
      double dot = 0.0, nrm = 0.0;
      for (int i = 0; i < d; ++i) {
        dot += U.at(k, i) * glogp.at(k, i);
        nrm += U.at(k, i) * U.at(k, i);
      }
      sdiv += wq * divU.at(k) * divU.at(k) * pil;
      sdrift += wq * dot * dot * pil;
      slin += wq * nrm * pil;
      str += wq * trc.at(k) * trc.at(k) * pil;
      sone += wq * pil;
    }
    out.i3_div = std::max(out.i3_div, sdiv);
    out.i3_drift = std::max(out.i3_drift, sdrift);
    out.i3_lin = std::max(out.i3_lin, slin);
    out.i3_tr = std::max(out.i3_tr, str);
    out.i3_const = std::max(out.i3_const, sone);
  }
  return out;
}

SweepValues finish_sweep(const std::string& name, double v0, double v1,
                         double v2) {
  SweepValues s;
  s.name = name;
  s.value = {v0, v1, v2};
  const double scale = std::abs(v2) + 1e-300;
  s.rel_change = std::abs(v2 - v1) / scale;
  s.trend = std::log2(std::abs(v1 - v0) / (std::abs(v2 - v1) + 1e-300));
  // settled, or still moving but with geometrically shrinking increments
  // (a Cauchy sweep headed for a finite limit, e.g. a signed integral
  // cancelling toward zero); divergent sweeps have non-contracting
  // increments and fail both clauses
  const double contraction =
      std::abs(v2 - v1) / (std::abs(v1 - v0) + 1e-300);
  s.stable = std::isfinite(v0) && std::isfinite(v1) && std::isfinite(v2) &&
             (s.rel_change < 5e-2 || contraction <= 0.9);
  return s;
}

}  // namespace

AssumptionReport audit_assumptions(const MarketModel& mm,
                                   const AveragedFields& av,
                                   double k_exponent) {
  AssumptionReport rep;
  const int d = mm.d, m = mm.m;
  auto ge = av.A.g;
  auto gd = av.B.g;

  std::vector<int> n_axes;
  for (const auto& ax : ge->axes) n_axes.push_back(static_cast<int>(ax.n));
  for (const auto& ax : gd->axes) n_axes.push_back(static_cast<int>(ax.n));
  const double eps = ge->axes[0].eps;

  // concavity of the k-th root of the slice weight, sampled in the asset
  // state and tested along every factor axis line
  auto g0 = build_grid(mm, n_axes, eps);
  auto ge0 = endo_grid(g0);
  auto gd0 = exo_grid(g0);
  const std::int64_t ne = ge0->n_nodes, nd = gd0->n_nodes;
  const std::int64_t stride = std::max<std::int64_t>(1, ne / 32);

  std::vector<double> powers;
  if (k_exponent > 0.0)
    powers = {k_exponent};
  else
    powers = {1.0, 2.0, 4.0};

  double best_norm = -std::numeric_limits<double>::infinity();
  std::vector<double> z(d + m), cy(m * m);
  for (double kc : powers) {
    double worst = std::numeric_limits<double>::infinity();
    double vmax = 0.0;
    Field v = make_field(gd0, 1);
    for (std::int64_t e = 0; e < ne; e += stride) {
      for (std::int64_t q = 0; q < nd; ++q) {
        ge0->coords(e, z.data());
        gd0->coords(q, z.data() + d);
        mm.c_y(z.data(), z.data() + d, cy.data());
        const double w = sym_min_eig(cy.data(), m) *
                         mm.density(z.data(), z.data() + d);
        v.at(q) = std::pow(std::max(w, 0.0), 1.0 / kc);
        vmax = std::max(vmax, v.at(q));
      }
      worst = std::min(worst, midpoint_margin(v));
    }
    const bool certifies = worst >= -1e-10 * std::max(vmax, 1e-300);
    const double norm = worst / std::max(vmax, 1e-300);
    if (certifies) {
      rep.k = kc;
      rep.rho_margin = worst;
      rep.concave = true;
      break;
    }
    if (norm > best_norm) {
      best_norm = norm;
      rep.k = kc;
      rep.rho_margin = worst;
    }
  }

  // truncation sweeps of the integrability probes
  SweepAccum s0 = sweep_level(mm, n_axes, eps);
  SweepAccum s1 = sweep_level(mm, n_axes, 0.5 * eps);
  SweepAccum s2 = sweep_level(mm, n_axes, 0.25 * eps);
  rep.integrals.push_back(
      finish_sweep("divergence-term", s0.i3_div, s1.i3_div, s2.i3_div));
  rep.integrals.push_back(
      finish_sweep("drift-term", s0.i3_drift, s1.i3_drift, s2.i3_drift));
  rep.integrals.push_back(
      finish_sweep("linear-term", s0.i3_lin, s1.i3_lin, s2.i3_lin));
  rep.integrals.push_back(
      finish_sweep("trace-term", s0.i3_tr, s1.i3_tr, s2.i3_tr));
  rep.integrals.push_back(
      finish_sweep("weight-mass", s0.i3_const, s1.i3_const, s2.i3_const));
  rep.integrals.push_back(finish_sweep("drift-energy", s0.ell_c_ell,
                                       s1.ell_c_ell, s2.ell_c_ell));
  rep.integrals.push_back(
      finish_sweep("flux-divergence", s0.div_flux, s1.div_flux, s2.div_flux));

  if (d == 1 && m == 1) {
    try {
      EnergyTable et = test_function_energies(av, {4, 8, 16, 32});
      rep.energy_n = et.n;
      rep.energy_phi = et.e_phi;
      rep.energy_psi = et.e_psi;
      rep.energies_decreasing = et.phi_decreasing && et.psi_decreasing;
    } catch (const ResolutionTooCoarse&) {
    }
  }
  return rep;
}

EnergyTable test_function_energies(const AveragedFields& av,
                                   const std::vector<int>& n_schedule) {
  if (!av.A.g || av.A.g->dim() != 1 || !av.B.g || av.B.g->dim() != 1)
    throw WrongSetting(
        "test_function_energies: needs one-dimensional asset and factor axes");
  EnergyTable et;
  for (int n : n_schedule) {
    if (n < 2)
      throw BadConfig("test_function_energies: schedule entries must be >= 2");
    for (const Field* f : {&av.A, &av.B}) {
      const Axis& ax = f->g->axes[0];
      if (ax.h > (ax.hi - ax.lo) / (2.0 * n))
        throw ResolutionTooCoarse(
            "test_function_energies: grid spacing exceeds the cutoff ramp "
            "width");
    }
    et.n.push_back(n);
    et.e_phi.push_back(cutoff_energy(av.A, n));
    et.e_psi.push_back(cutoff_energy(av.B, n));
  }
  et.phi_decreasing = decreasing_from(et.n, et.e_phi);
  et.psi_decreasing = decreasing_from(et.n, et.e_psi);
  return et;
}

}  // namespace rg
