#include "robustgrowth/averaging.hpp"

#include <cmath>

#include "robustgrowth/fd.hpp"

namespace rg {

AveragedFields average_fields(const MarketModel& mm, const GridPtr& g) {
  const int d = mm.d, m = mm.m;
  auto ge = endo_grid(g);
  auto gd = exo_grid(g);
  const std::int64_t ne = ge->n_nodes, nd = gd->n_nodes;

  AveragedFields out;
  out.A = make_field(ge, d * d);
  out.divA = make_field(ge, d);
  out.pX = make_field(ge, 1);
  out.cbar = make_field(ge, d * d);
  out.B = make_field(gd, m * m);
  for (std::int64_t q = 0; q < nd; ++q) out.d_volume += gd->wq[q];

  std::vector<double> x(d), y(m), cx(d * d), cy(m * m), buf(d * d);
  const bool exact_div = mm.analytic && mm.analytic->cxp_dx;
  const bool exact_d2 = d == 1 && mm.analytic && mm.analytic->cxp_d2;
  if (exact_d2) out.A2xx = make_field(ge, 1);

  for (std::int64_t e = 0; e < ne; ++e) {
    ge->coords(e, x.data());
    const double we = ge->wq[e];
    double* Ae = out.A.row(e);
    double* dAe = out.divA.row(e);
    for (std::int64_t q = 0; q < nd; ++q) {
      gd->coords(q, y.data());
      const double wd = gd->wq[q];
      const double p = mm.density(x.data(), y.data());
      mm.c_x(x.data(), y.data(), cx.data());
      mm.c_y(x.data(), y.data(), cy.data());
      for (int i = 0; i < d * d; ++i) Ae[i] += wd * cx[i] * p;
      out.pX.at(e) += wd * p;
      double* Bq = out.B.row(q);
      for (int i = 0; i < m * m; ++i) Bq[i] += we * cy[i] * p;
      if (exact_div) {
        for (int j = 0; j < d; ++j) {
          mm.analytic->cxp_dx(x.data(), y.data(), j, buf.data());
          for (int i = 0; i < d; ++i) dAe[i] += wd * buf[i * d + j];
        }
      }
      if (exact_d2) {
        mm.analytic->cxp_d2(x.data(), y.data(), 0, 0, buf.data());
        out.A2xx.at(e) += wd * buf[0];
      }
    }
    for (int i = 0; i < d * d; ++i)
      if (!std::isfinite(Ae[i]))
        throw QuadratureOverflow("average_fields: non-finite averaged covariance");
    if (!std::isfinite(out.pX.at(e)) || !(out.pX.at(e) > 0.0))
      throw DivideByZeroDensity("average_fields: marginal density not positive");
    for (int i = 0; i < d * d; ++i) out.cbar.at(e, i) = Ae[i] / out.pX.at(e);
  }

  if (!exact_div) {
    for (int i = 0; i < d; ++i) {
      Field col = make_field(ge, 1), dcol = make_field(ge, 1);
      for (int j = 0; j < d; ++j) {
        for (std::int64_t e = 0; e < ne; ++e) col.at(e) = out.A.at(e, i * d + j);
        diff_axis(col, 0, j, dcol, 0);
        for (std::int64_t e = 0; e < ne; ++e) out.divA.at(e, i) += dcol.at(e);
      }
    }
  }
  return out;
}

DriftFields drift_fields(const MarketModel& mm, const GridPtr& g) {
  const int d = mm.d, m = mm.m;
  DriftFields out;
  out.ell_x = make_field(g, d);
  out.ell_y = make_field(g, m);
  std::vector<double> z(d + m);

  if (mm.analytic && mm.analytic->ell_x && mm.analytic->ell_y) {
    for (std::int64_t k = 0; k < g->n_nodes; ++k) {
      g->coords(k, z.data());
      mm.analytic->ell_x(z.data(), z.data() + d, out.ell_x.row(k));
      mm.analytic->ell_y(z.data(), z.data() + d, out.ell_y.row(k));
    }
    return out;
  }

  // finite-difference fallback: ell = (1/2) c^{-1} div c + (1/2) grad log p
  Field CX = make_field(g, d * d), CY = make_field(g, m * m), P = make_field(g, 1);
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    g->coords(k, z.data());
    mm.c_x(z.data(), z.data() + d, CX.row(k));
    mm.c_y(z.data(), z.data() + d, CY.row(k));
    P.at(k) = mm.density(z.data(), z.data() + d);
  }
  Field divCX = make_field(g, d), divCY = make_field(g, m);
  Field tmp = make_field(g, 1);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      diff_axis(CX, i * d + j, j, tmp, 0);
      for (std::int64_t k = 0; k < g->n_nodes; ++k)
        divCX.at(k, i) += tmp.at(k);
    }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      diff_axis(CY, i * m + j, d + j, tmp, 0);
      for (std::int64_t k = 0; k < g->n_nodes; ++k)
        divCY.at(k, i) += tmp.at(k);
    }
  Field gradP = make_field(g, d + m);
  for (int a = 0; a < d + m; ++a) diff_axis(P, 0, a, gradP, a);

  std::vector<double> v(std::max(d, m));
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    const double p = P.at(k);
    for (int i = 0; i < d; ++i) v[i] = divCX.at(k, i);
    spd_solve_inplace(CX.row(k), d, v.data());
    for (int i = 0; i < d; ++i)
      out.ell_x.at(k, i) = 0.5 * v[i] + 0.5 * gradP.at(k, i) / p;
    for (int i = 0; i < m; ++i) v[i] = divCY.at(k, i);
    spd_solve_inplace(CY.row(k), m, v.data());
    for (int i = 0; i < m; ++i)
      out.ell_y.at(k, i) = 0.5 * v[i] + 0.5 * gradP.at(k, d + i) / p;
  }
  return out;
}

}  // namespace rg
