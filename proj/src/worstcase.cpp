#include "robustgrowth/worstcase.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>

#include "robustgrowth/fd.hpp"
#include "robustgrowth/threads.hpp"

namespace rg {

namespace {

// quintic smoothstep, C^2-flat at both ends
double smooth5(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
double smooth5_d1(double t) { return t * t * (30.0 + t * (-60.0 + 30.0 * t)); }
double smooth5_d2(double t) { return t * (60.0 + t * (-180.0 + 120.0 * t)); }

struct Ramp1 {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

// per-axis profile: 0 outside [v_lo, v_hi], 1 on [k_lo, k_hi], quintic ramps
// between; a zero-width ramp degenerates to a sharp cutoff
Ramp1 axis_profile(double x, double vlo, double klo, double khi, double vhi) {
  Ramp1 r;
  if (x < vlo || x > vhi) return r;
  if (x >= klo && x <= khi) {
    r.v = 1.0;
    return r;
  }
  if (x < klo) {
    const double w = klo - vlo;
    if (w <= 0.0) {
      r.v = 1.0;
      return r;
    }
    const double t = (x - vlo) / w;
    r.v = smooth5(t);
    r.d1 = smooth5_d1(t) / w;
    r.d2 = smooth5_d2(t) / (w * w);
  } else {
    const double w = vhi - khi;
    if (w <= 0.0) {
      r.v = 1.0;
      return r;
    }
    const double t = (vhi - x) / w;
    r.v = smooth5(t);
    r.d1 = -smooth5_d1(t) / w;
    r.d2 = smooth5_d2(t) / (w * w);
  }
  return r;
}

// parallel_for that hands the first worker exception back to the caller
void run_slices(std::int64_t n, const std::function<void(std::int64_t)>& body) {
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::exception_ptr err;
  parallel_for(n, [&](std::int64_t i) {
    if (failed.load(std::memory_order_relaxed)) return;
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!err) err = std::current_exception();
      failed.store(true, std::memory_order_relaxed);
    }
  });
  if (err) std::rethrow_exception(err);
}

double box_diameter(const Grid& g) {
  double s = 0.0;
  for (const auto& ax : g.axes) s += ax.width() * ax.width();
  return std::sqrt(s);
}

// density, ctilde, elltilde and the preservation defect for prebuilt eta fields
KModification finish_modification(const MarketModel& mm,
                                  const AveragedFields& av, const GridPtr& g,
                                  KModification km) {
  const int d = mm.d;
  auto ge = endo_grid(g), gd = exo_grid(g);
  const std::int64_t ne = ge->n_nodes, nd = gd->n_nodes;

  km.grid = g;
  double dvol = 0.0;
  for (std::int64_t q = 0; q < nd; ++q) dvol += gd->wq[q];
  km.d_volume = dvol;
  km.p = make_field(g, 1);
  km.ctilde = make_field(g, d * d);
  km.elltilde = make_field(g, d);

  const bool exact_div = mm.analytic && mm.analytic->cxp_dx != nullptr;
  std::vector<double> defect(ne, 0.0);
  Field M;  // ctilde * p, kept only for the finite-difference divergence route
  if (!exact_div) M = make_field(g, d * d);

  run_slices(ne, [&](std::int64_t e) {
    std::vector<double> x(d), y(std::max(mm.m, 1)), cx(d * d), buf(d * d),
        cs(d * d, 0.0), divM(d), Mk(d * d);
    ge->coords(e, x.data());
    const double eta = km.eta.at(e);
    const double* e1 = km.deta.row(e);
    const double* Ae = av.A.row(e);
    const double* dAe = av.divA.row(e);
    for (std::int64_t q = 0; q < nd; ++q) {
      const std::int64_t kk = e * nd + q;
      gd->coords(q, y.data());
      const double p = mm.density(x.data(), y.data());
      if (!(p > 0.0) || !std::isfinite(p))
        throw DivideByZeroDensity(
            "build_k_modification: density not positive on the grid");
      km.p.at(kk) = p;
      mm.c_x(x.data(), y.data(), cx.data());
      double* ct = km.ctilde.row(kk);
      for (int i = 0; i < d * d; ++i)
        ct[i] = eta * cx[i] + (1.0 - eta) * Ae[i] / (p * dvol);
      const double wd = gd->wq[q];
      for (int i = 0; i < d * d; ++i) cs[i] += wd * ct[i] * p;
      if (exact_div) {
        for (int i = 0; i < d; ++i) {
          double s = (1.0 - eta) * dAe[i] / dvol;
          for (int j = 0; j < d; ++j)
            s += e1[j] * (cx[i * d + j] * p - Ae[i * d + j] / dvol);
          divM[i] = s;
        }
        for (int j = 0; j < d; ++j) {
          mm.analytic->cxp_dx(x.data(), y.data(), j, buf.data());
          for (int i = 0; i < d; ++i) divM[i] += eta * buf[i * d + j];
        }
        for (int i = 0; i < d * d; ++i) Mk[i] = ct[i] * p;
        spd_solve_inplace(Mk.data(), d, divM.data());
        for (int i = 0; i < d; ++i) km.elltilde.at(kk, i) = 0.5 * divM[i];
      } else {
        double* Mr = M.row(kk);
        for (int i = 0; i < d * d; ++i) Mr[i] = ct[i] * p;
      }
    }
    double scale = 0.0, worst = 0.0;
    for (int i = 0; i < d * d; ++i) scale = std::max(scale, std::abs(Ae[i]));
    for (int i = 0; i < d * d; ++i)
      worst = std::max(worst, std::abs(cs[i] - Ae[i]));
    defect[e] = worst / std::max(scale, 1e-300);
  });

  if (!exact_div) {
    Field divM = make_field(g, d), tmp = make_field(g, 1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        diff_axis(M, i * d + j, j, tmp, 0);
        for (std::int64_t kk = 0; kk < g->n_nodes; ++kk)
          divM.at(kk, i) += tmp.at(kk);
      }
    run_slices(ne, [&](std::int64_t e) {
      std::vector<double> Mk(d * d), v(d);
      for (std::int64_t q = 0; q < nd; ++q) {
        const std::int64_t kk = e * nd + q;
        const double p = km.p.at(kk);
        const double* ct = km.ctilde.row(kk);
        for (int i = 0; i < d * d; ++i) Mk[i] = ct[i] * p;
        for (int i = 0; i < d; ++i) v[i] = divM.at(kk, i);
        spd_solve_inplace(Mk.data(), d, v.data());
        for (int i = 0; i < d; ++i) km.elltilde.at(kk, i) = 0.5 * v[i];
      }
    });
  }

  km.preservation = *std::max_element(defect.begin(), defect.end());
  return km;
}

}  // namespace

KModification build_k_modification(const MarketModel& mm,
                                   const AveragedFields& av, const GridPtr& g,
                                   const Box& k_box, const Box& v_box) {
  const int d = mm.d;
  auto ge = endo_grid(g);
  if (k_box.dim() != d || v_box.dim() != d)
    throw BadNesting("build_k_modification: box dimension mismatch");
  for (int a = 0; a < d; ++a) {
    const auto& ax = ge->axes[a];
    const double tol = 1e-12 * std::max(1.0, ax.width());
    if (v_box.lo[a] < ax.a() - tol || v_box.hi[a] > ax.b() + tol ||
        k_box.lo[a] < v_box.lo[a] - tol || k_box.hi[a] > v_box.hi[a] + tol ||
        k_box.lo[a] > k_box.hi[a] + tol)
      throw BadNesting(
          "build_k_modification: need K inside V inside the truncated box");
  }

  KModification km;
  km.k_box = k_box;
  km.v_box = v_box;
  km.eta = make_field(ge, 1);
  km.deta = make_field(ge, d);
  km.d2eta = make_field(ge, d);

  std::vector<double> x(d);
  std::vector<Ramp1> r(d);
  for (std::int64_t e = 0; e < ge->n_nodes; ++e) {
    ge->coords(e, x.data());
    for (int a = 0; a < d; ++a)
      r[a] = axis_profile(x[a], v_box.lo[a], k_box.lo[a], k_box.hi[a],
                          v_box.hi[a]);
    double prod = 1.0;
    for (int a = 0; a < d; ++a) prod *= r[a].v;
    km.eta.at(e) = prod;
    for (int a = 0; a < d; ++a) {
      double rest = 1.0;
      for (int b = 0; b < d; ++b)
        if (b != a) rest *= r[b].v;
      km.deta.at(e, a) = r[a].d1 * rest;
      km.d2eta.at(e, a) = r[a].d2 * rest;
    }
  }
  return finish_modification(mm, av, g, std::move(km));
}

KModification identity_modification(const MarketModel& mm,
                                    const AveragedFields& av,
                                    const GridPtr& g) {
  auto ge = endo_grid(g);
  Box whole;
  for (const auto& ax : ge->axes) {
    whole.lo.push_back(ax.a());
    whole.hi.push_back(ax.b());
  }
  return build_k_modification(mm, av, g, whole, whole);
}

KModification uniform_modification(const MarketModel& mm,
                                   const AveragedFields& av, const GridPtr& g) {
  auto ge = endo_grid(g);
  const int d = ge->dim();
  KModification km;  // boxes stay empty: eta vanishes identically
  km.eta = make_field(ge, 1);
  km.deta = make_field(ge, d);
  km.d2eta = make_field(ge, d);
  return finish_modification(mm, av, g, std::move(km));
}

Field slice_rhs(const MarketModel& mm, const AveragedFields& av,
                const KModification& km, const PhiSolution& sol,
                std::int64_t endo_node, double* raw_mean) {
  const int d = mm.d;
  const GridPtr& g = km.grid;
  auto ge = endo_grid(g), gd = exo_grid(g);
  const std::int64_t nd = gd->n_nodes, e = endo_node;
  Field f = make_field(gd, 1);
  double ref = 0.0;  // cancellation scale, floors the mean tolerance

  const bool exact = d == 1 && mm.analytic && mm.analytic->cxp_dx &&
                     mm.analytic->cxp_d2 && av.A2xx.nodes() > 0 &&
                     sol.method == "1d-closed-form";
  if (exact) {
    // all three x-derivative orders of ctilde*p in closed form, so the slice
    // mean cancels algebraically instead of to stencil accuracy
    double x = 0.0;
    ge->coords(e, &x);
    const double A = av.A.at(e), A1 = av.divA.at(e), A2 = av.A2xx.at(e);
    const double p1 = sol.grad_phi.at(e);
    const double p2 = (A2 * A - A1 * A1) / (2.0 * A * A);
    const double dv = km.d_volume;
    const double ab = A / dv, ab1 = A1 / dv, ab2 = A2 / dv;
    const double eta = km.eta.at(e), e1 = km.deta.at(e), e2 = km.d2eta.at(e);
    std::vector<double> y(mm.m);
    for (std::int64_t q = 0; q < nd; ++q) {
      gd->coords(q, y.data());
      double cx = 0.0, cpx = 0.0, cpxx = 0.0;
      mm.c_x(&x, y.data(), &cx);
      const double cp = cx * km.p.at(e * nd + q);
      mm.analytic->cxp_dx(&x, y.data(), 0, &cpx);
      mm.analytic->cxp_d2(&x, y.data(), 0, 0, &cpxx);
      const double m0 = eta * cp + (1.0 - eta) * ab;
      const double m1 = e1 * (cp - ab) + eta * cpx + (1.0 - eta) * ab1;
      const double m2 = e2 * (cp - ab) + 2.0 * e1 * (cpx - ab1) +
                        eta * cpxx + (1.0 - eta) * ab2;
      f.at(q) = 0.5 * m2 - m1 * p1 - m0 * p2;
      ref = std::max(ref, std::abs(0.5 * m2) + std::abs(m1 * p1) +
                              std::abs(m0 * p2));
    }
  } else {
    // flux per endo axis H_a = p ctilde (elltilde - grad phi), differenced
    // across neighbouring slices with the solver's own stencils; href tracks
    // the scale of the terms before cancellation, so identically-zero fluxes
    // known only to rounding accuracy are not flagged as solvability failures
    auto h_slice = [&](std::int64_t ep, int a, std::vector<double>& out,
                       double& href) {
      const double* gp = sol.grad_phi.row(ep);
      for (std::int64_t q = 0; q < nd; ++q) {
        const std::int64_t kk = ep * nd + q;
        const double* ct = km.ctilde.row(kk);
        const double* lt = km.elltilde.row(kk);
        double s = 0.0, sabs = 0.0;
        for (int j = 0; j < d; ++j) {
          s += ct[a * d + j] * (lt[j] - gp[j]);
          sabs += std::abs(ct[a * d + j]) *
                  (std::abs(lt[j]) + std::abs(gp[j]));
        }
        out[q] = km.p.at(kk) * s;
        href = std::max(href, km.p.at(kk) * sabs);
      }
    };
    std::vector<int> idx(d);
    ge->unflat(e, idx.data());
    std::vector<double> h0(nd), h1(nd), h2(nd);
    for (int a = 0; a < d; ++a) {
      const std::int64_t s = ge->strides[a];
      const int n = ge->axes[a].n, i = idx[a];
      const double c = 1.0 / (2.0 * ge->axes[a].h);
      double href = 0.0;
      if (i > 0 && i < n - 1) {
        h_slice(e - s, a, h0, href);
        h_slice(e + s, a, h1, href);
        for (std::int64_t q = 0; q < nd; ++q)
          f.at(q) += c * (h1[q] - h0[q]);
      } else if (i == 0) {
        h_slice(e, a, h0, href);
        h_slice(e + s, a, h1, href);
        h_slice(e + 2 * s, a, h2, href);
        for (std::int64_t q = 0; q < nd; ++q)
          f.at(q) += c * (-3.0 * h0[q] + 4.0 * h1[q] - h2[q]);
      } else {
        h_slice(e, a, h0, href);
        h_slice(e - s, a, h1, href);
        h_slice(e - 2 * s, a, h2, href);
        for (std::int64_t q = 0; q < nd; ++q)
          f.at(q) += c * (3.0 * h0[q] - 4.0 * h1[q] + h2[q]);
      }
      ref += 8.0 * c * href;
    }
  }

  double mean = 0.0, wsum = 0.0, fmax = 0.0;
  for (std::int64_t q = 0; q < nd; ++q) {
    mean += gd->wq[q] * f.at(q);
    wsum += gd->wq[q];
    fmax = std::max(fmax, std::abs(f.at(q)));
  }
  if (std::abs(mean) > 1e-6 * fmax + 1e-13 * std::max(ref, fmax))
    throw MeanNotZero(
        "slice_rhs: slice right-hand side has a nonzero mean, the averaged "
        "problem is not preserved at this node");
  if (raw_mean) *raw_mean = mean;
  const double adj = mean / wsum;
  for (std::int64_t q = 0; q < nd; ++q) f.at(q) -= adj;
  return f;
}

SliceSolution solve_v_slice(const Field& a, const Field& xi, const Field& f) {
  const GridPtr& gd = a.g;
  const int m = gd->dim();
  const std::int64_t n = gd->n_nodes;

  SliceSolution out;
  out.du = make_field(gd, m);
  out.flux = make_field(gd, m);

  std::vector<double> w(n);
  for (std::int64_t k = 0; k < n; ++k) {
    w[k] = sym_min_eig(a.row(k), m);
    if (!(w[k] > 0.0) || !std::isfinite(w[k]))
      throw SingularSlice(
          "solve_v_slice: diffusion block loses positive definiteness");
  }

  if (m == 1) {
    // the flux a(u' - xi) is the running integral of f; two quadratures
    const double h = gd->axes[0].h;
    Field F = make_field(gd, 1);
    for (std::int64_t k = 0; k + 1 < n; ++k)
      F.at(k + 1) = F.at(k) + 0.5 * h * (f.at(k) + f.at(k + 1));
    out.u = make_field(gd, 1);
    for (std::int64_t k = 0; k < n; ++k)
      out.du.at(k) = xi.at(k) + F.at(k) / a.at(k);
    for (std::int64_t k = 0; k + 1 < n; ++k)
      out.u.at(k + 1) = out.u.at(k) + 0.5 * h * (out.du.at(k) + out.du.at(k + 1));
    out.flux = F;
    out.diag.weak_residual = std::abs(F.at(n - 1)) / (1.0 + max_abs(F));
  } else {
    DivFormOperator op{&a, gd, m};
    std::vector<double> b = op.rhs(xi);
    for (std::int64_t k = 0; k < n; ++k) b[k] -= gd->wq[k] * f.at(k);
    std::vector<double> uvec;
    const CgResult cg = cg_zero_mean(op, b, uvec, 1e-10, 0);
    out.u = make_field(gd, 1);
    out.u.a = std::move(uvec);
    for (int j = 0; j < m; ++j) diff_axis(out.u, 0, j, out.du, j);
    for (std::int64_t k = 0; k < n; ++k) {
      const double* ak = a.row(k);
      for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j)
          s += ak[i * m + j] * (out.du.at(k, j) - xi.at(k, j));
        out.flux.at(k, i) = s;
      }
    }
    out.diag.weak_residual = cg.residual / (1.0 + cg.rhs_norm);
    out.diag.iterations = cg.iterations;
  }

  double num = 0.0, den = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    num += gd->wq[k] * w[k] * out.u.at(k);
    den += gd->wq[k] * w[k];
  }
  const double shift = num / den;
  for (std::int64_t k = 0; k < n; ++k) out.u.at(k) -= shift;

  double quad = 0.0, jlin = 0.0, lhs2 = 0.0, fr2 = 0.0, xi2 = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double wq = gd->wq[k];
    const double* ak = a.row(k);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double aij = ak[i * m + j];
        quad += wq * (out.du.at(k, i) - xi.at(k, i)) * aij *
                (out.du.at(k, j) - xi.at(k, j));
        lhs2 += wq * out.du.at(k, i) * aij * out.du.at(k, j);
        xi2 += wq * xi.at(k, i) * aij * xi.at(k, j);
      }
    jlin += wq * f.at(k) * out.u.at(k);
    fr2 += wq * f.at(k) * f.at(k) / w[k];
  }
  const double diam = box_diameter(*gd);
  out.diag.j_value = 0.5 * quad + jlin;
  out.diag.wnorm_lhs = std::sqrt(lhs2);
  out.diag.wnorm_rhs =
      (2.0 * diam / std::numbers::pi) * std::sqrt(fr2) + 2.0 * std::sqrt(xi2);
  out.diag.bound_ok =
      out.diag.wnorm_lhs <= out.diag.wnorm_rhs * 1.05 + 1e-12;
  return out;
}

VSolution solve_vhat(const MarketModel& mm, const AveragedFields& av,
                     const KModification& km, const PhiSolution& sol) {
  const GridPtr& g = km.grid;
  auto ge = endo_grid(g), gd = exo_grid(g);
  const std::int64_t ne = ge->n_nodes, nd = gd->n_nodes;
  const int d = mm.d, m = mm.m;

  VSolution vs;
  vs.grid = g;
  vs.vhat = make_field(g, 1);
  vs.grad_y_vhat = make_field(g, m);
  vs.fx = make_field(g, 1);
  vs.flux = make_field(g, m);
  vs.a = make_field(g, m * m);
  vs.w = make_field(g, 1);
  vs.slices.resize(ne);

  DriftFields df = drift_fields(mm, g);
  vs.xi = std::move(df.ell_y);

  run_slices(ne, [&](std::int64_t e) {
    std::vector<double> z(d + m), cy(m * m);
    for (std::int64_t q = 0; q < nd; ++q) {
      const std::int64_t kk = e * nd + q;
      g->coords(kk, z.data());
      mm.c_y(z.data(), z.data() + d, cy.data());
      const double p = km.p.at(kk);
      double* ak = vs.a.row(kk);
      for (int i = 0; i < m * m; ++i) ak[i] = cy[i] * p;
      vs.w.at(kk) = sym_min_eig(ak, m);
    }
  });

  run_slices(ne, [&](std::int64_t e) {
    Field as = make_field(gd, m * m), xis = make_field(gd, m);
    for (std::int64_t q = 0; q < nd; ++q) {
      const std::int64_t kk = e * nd + q;
      for (int i = 0; i < m * m; ++i) as.at(q, i) = vs.a.at(kk, i);
      for (int i = 0; i < m; ++i) xis.at(q, i) = vs.xi.at(kk, i);
    }
    double rawm = 0.0;
    Field fs = slice_rhs(mm, av, km, sol, e, &rawm);
    SliceSolution ss = solve_v_slice(as, xis, fs);
    ss.diag.f_mean_raw = rawm;
    for (std::int64_t q = 0; q < nd; ++q) {
      const std::int64_t kk = e * nd + q;
      vs.vhat.at(kk) = ss.u.at(q);
      vs.fx.at(kk) = fs.at(q);
      for (int i = 0; i < m; ++i) {
        vs.grad_y_vhat.at(kk, i) = ss.du.at(q, i);
        vs.flux.at(kk, i) = ss.flux.at(q, i);
      }
    }
    vs.slices[e] = ss.diag;
  });

  for (std::int64_t e = 0; e < ne; ++e) {
    vs.j_total += ge->wq[e] * vs.slices[e].j_value;
    if (!vs.slices[e].bound_ok) ++vs.bound_failures;
  }

  // axis-wise midpoint concavity of w^{1/k}, smallest certifying power
  std::vector<double> v(g->n_nodes);
  for (int kc : {1, 2, 4}) {
    for (std::int64_t kk = 0; kk < g->n_nodes; ++kk) {
      const double wv = vs.w.at(kk);
      v[kk] = kc == 1 ? wv : (kc == 2 ? std::sqrt(wv) : std::sqrt(std::sqrt(wv)));
    }
    double worst = std::numeric_limits<double>::infinity(), vmax = 0.0;
    for (std::int64_t kk = 0; kk < g->n_nodes; ++kk)
      vmax = std::max(vmax, v[kk]);
    for (int j = 0; j < m; ++j) {
      const std::int64_t s = g->strides[d + j];
      const int naj = g->axes[d + j].n;
      for (std::int64_t kk = 0; kk < g->n_nodes; ++kk) {
        const int i = static_cast<int>((kk / s) % naj);
        if (i == 0 || i == naj - 1) continue;
        const double margin = v[kk] - 0.5 * (v[kk - s] + v[kk + s]);
        worst = std::min(worst, margin);
      }
    }
    vs.k = kc;
    vs.rho = worst;
    if (worst >= -1e-10 * std::max(vmax, 1e-300)) break;
  }
  return vs;
}

Field assemble_beta(const KModification& km, const VSolution& vs,
                    const PhiSolution& sol) {
  const GridPtr& g = km.grid;
  const int d = sol.grad_phi.nc, m = vs.grad_y_vhat.nc;
  const std::int64_t ne = km.eta.nodes();
  const std::int64_t nd = g->n_nodes / ne;
  Field beta = make_field(g, d + m);
  for (std::int64_t kk = 0; kk < g->n_nodes; ++kk) {
    const std::int64_t e = kk / nd;
    const double* gp = sol.grad_phi.row(e);
    const double* ct = km.ctilde.row(kk);
    const double* lt = km.elltilde.row(kk);
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += ct[i * d + j] * (gp[j] - lt[j]);
      beta.at(kk, i) = s;
    }
    const double p = km.p.at(kk);
    for (int i = 0; i < m; ++i) beta.at(kk, d + i) = vs.flux.at(kk, i) / p;
  }
  return beta;
}

double div_free_residual(const Field& beta, const Field& p, int n_bumps) {
  const GridPtr& g = beta.g;
  const int D = g->dim();
  const std::int64_t N = g->n_nodes;

  double b2 = 0.0;
  for (std::int64_t k = 0; k < N; ++k) {
    double s = 0.0;
    for (int c = 0; c < beta.nc; ++c) s += beta.at(k, c) * beta.at(k, c);
    b2 += g->wq[k] * p.at(k) * s;
  }
  const double bnorm = std::sqrt(b2);

  auto frac = [](double v) { return v - std::floor(v); };
  double worst = 0.0;
  std::vector<double> z(D), cc(D), rr(D), val(D), der(D);
  for (int ib = 0; ib < n_bumps; ++ib) {
    for (int a = 0; a < D; ++a) {
      const auto& ax = g->axes[a];
      rr[a] = ax.width() * (0.22 + 0.16 * frac(0.6180339887498949 * (ib + 1) +
                                               0.137 * a));
      const double clo = ax.a() + rr[a], chi = ax.b() - rr[a];
      cc[a] = clo + (chi - clo) * frac(0.7548776662466927 * (ib + 1) +
                                       0.31 * a + 0.17);
    }
    double num = 0.0, g2 = 0.0;
    for (std::int64_t k = 0; k < N; ++k) {
      g->coords(k, z.data());
      bool outside = false;
      for (int a = 0; a < D && !outside; ++a) {
        const double t = (z[a] - cc[a]) / rr[a];
        if (std::abs(t) >= 1.0) {
          outside = true;
          break;
        }
        const double q = 1.0 - t * t;
        const double q2 = q * q;
        val[a] = q2 * q2;
        der[a] = -8.0 * t * q * q2;
      }
      if (outside) continue;
      const double wp = g->wq[k] * p.at(k);
      for (int a = 0; a < D; ++a) {
        double grad = der[a] / rr[a];
        for (int b = 0; b < D; ++b)
          if (b != a) grad *= val[b];
        num += wp * beta.at(k, a) * grad;
        g2 += wp * grad * grad;
      }
    }
    worst = std::max(worst, std::abs(num) / (bnorm * std::sqrt(g2) + 1e-300));
  }
  return worst;
}

M1Identity check_m1_identity(const MarketModel& mm, const GridPtr& g,
                             const AveragedFields& av, const PhiSolution& sol) {
  if (mm.m != 1)
    throw WrongSetting("check_m1_identity: needs one exogenous factor");
  if (sol.method != "1d-closed-form" && sol.method != "gradient-case")
    throw WrongSetting("check_m1_identity: needs a gradient-case potential");

  KModification km = identity_modification(mm, av, g);
  VSolution vs = solve_vhat(mm, av, km, sol);

  M1Identity out;
  for (std::int64_t kk = 0; kk < g->n_nodes; ++kk) {
    const double wq = g->wq[kk];
    const double F = vs.flux.at(kk);
    out.lhs += wq * F * F / vs.a.at(kk);
    out.rhs += wq * vs.fx.at(kk) * vs.fx.at(kk) / vs.w.at(kk);
  }
  out.gap = std::abs(out.lhs - out.rhs) /
            std::max(std::max(out.lhs, out.rhs), 1e-300);
  out.pass = out.gap < 2e-2;
  return out;
}

std::pair<double, double> weighted_poincare(const Field& w, const Field& u,
                                            const Field& du) {
  const GridPtr& g = u.g;
  double sw = 0.0, swu = 0.0;
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    sw += g->wq[k] * w.at(k);
    swu += g->wq[k] * w.at(k) * u.at(k);
  }
  const double mu = swu / sw;
  double lhs2 = 0.0, rhs2 = 0.0;
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    const double dev = u.at(k) - mu;
    lhs2 += g->wq[k] * w.at(k) * dev * dev;
    double s = 0.0;
    for (int a = 0; a < du.nc; ++a) s += du.at(k, a) * du.at(k, a);
    rhs2 += g->wq[k] * w.at(k) * s;
  }
  const double diam = box_diameter(*g);
  return {std::sqrt(lhs2),
          (2.0 * diam / std::numbers::pi) * std::sqrt(rhs2)};
}

}  // namespace rg
