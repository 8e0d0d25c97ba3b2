#include "robustgrowth/model.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace rg {

GridPtr build_grid(const MarketModel& mm, const std::vector<int>& n_axes,
                   double eps) {
  const int dim = mm.d + mm.m;
  std::vector<int> n = n_axes;
  if (n.size() == 1) n.assign(dim, n[0]);
  if (static_cast<int>(n.size()) != dim)
    throw BadResolution("build_grid: need one node count or one per axis");
  std::vector<Axis> axes;
  axes.reserve(dim);
  for (int a = 0; a < mm.d; ++a)
    axes.push_back(make_axis(mm.ebox.lo[a], mm.ebox.hi[a], eps, n[a]));
  for (int a = 0; a < mm.m; ++a)
    axes.push_back(
        make_axis(mm.dbox.lo[a], mm.dbox.hi[a], eps, n[mm.d + a]));
  return make_grid(std::move(axes), mm.d);
}

double sym_min_eig(const double* a, int r) {
  if (r == 1) return a[0];
  if (r == 2) {
    const double tr = a[0] + a[3];
    const double det = a[0] * a[3] - a[1] * a[2];
    const double disc = std::sqrt(std::max(0.0, tr * tr * 0.25 - det));
    return 0.5 * tr - disc;
  }
  Eigen::Map<const Eigen::MatrixXd> M(a, r, r);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  return es.eigenvalues().minCoeff();
}

void spd_solve_inplace(const double* a, int r, double* b) {
  if (r == 1) {
    b[0] /= a[0];
    return;
  }
  Eigen::Map<const Eigen::MatrixXd> M(a, r, r);
  Eigen::Map<Eigen::VectorXd> v(b, r);
  v = M.llt().solve(v).eval();
}

namespace {

void check_finite(const double* v, int n, const char* what) {
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(v[i]))
      throw EvaluatorFailure(std::string(what) + ": non-finite value");
}

}  // namespace

ValidationReport validate_model(const MarketModel& mm, const GridPtr& g) {
  const int d = mm.d, m = mm.m;
  std::vector<double> cx(d * d), cy(m * m), z(d + m);
  double min_p = 1e300, mass = 0.0;
  double min_eig_x = 1e300, min_eig_y = 1e300;
  double max_asym_x = 0.0, max_asym_y = 0.0, max_entry = 0.0;

  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    g->coords(k, z.data());
    const double* x = z.data();
    const double* y = z.data() + d;
    const double p = mm.density(x, y);
    check_finite(&p, 1, "density");
    mm.c_x(x, y, cx.data());
    mm.c_y(x, y, cy.data());
    check_finite(cx.data(), d * d, "c_x");
    check_finite(cy.data(), m * m, "c_y");

    min_p = std::min(min_p, p);
    mass += g->wq[k] * p;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < i; ++j)
        max_asym_x = std::max(max_asym_x, std::abs(cx[i * d + j] - cx[j * d + i]));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < i; ++j)
        max_asym_y = std::max(max_asym_y, std::abs(cy[i * m + j] - cy[j * m + i]));
    for (double v : cx) max_entry = std::max(max_entry, std::abs(v));
    min_eig_x = std::min(min_eig_x, sym_min_eig(cx.data(), d));
    min_eig_y = std::min(min_eig_y, sym_min_eig(cy.data(), m));
  }

  // finite-difference growth proxy along the first axis of each block
  double lip = 0.0;
  {
    std::vector<double> z2(d + m), cx2(d * d);
    for (std::int64_t k = 0; k + 1 < g->n_nodes; k += std::max<std::int64_t>(1, g->n_nodes / 4096)) {
      g->coords(k, z.data());
      g->coords(k + 1, z2.data());
      mm.c_x(z.data(), z.data() + d, cx.data());
      mm.c_x(z2.data(), z2.data() + d, cx2.data());
      double dz = 0.0, df = 0.0;
      for (int a = 0; a < d + m; ++a) dz = std::max(dz, std::abs(z2[a] - z[a]));
      for (int i = 0; i < d * d; ++i) df = std::max(df, std::abs(cx2[i] - cx[i]));
      if (dz > 0.0) lip = std::max(lip, df / dz);
    }
  }

  ValidationReport rep;
  rep.rows.push_back({"density_positive", min_p > 0.0, min_p, "min over grid"});
  rep.rows.push_back({"mass_normalized", std::abs(mass - 1.0) <= 5e-3, mass,
                      "quadrature of density, tol 5e-3"});
  rep.rows.push_back({"cx_symmetric", max_asym_x <= 1e-12 * std::max(1.0, max_entry),
                      max_asym_x, "max |c - c^T| entry"});
  rep.rows.push_back({"cy_symmetric", max_asym_y <= 1e-12 * std::max(1.0, max_entry),
                      max_asym_y, "max |c - c^T| entry"});
  rep.rows.push_back({"cx_spd", min_eig_x > 0.0, min_eig_x, "min eigenvalue"});
  rep.rows.push_back({"cy_spd", min_eig_y > 0.0, min_eig_y, "min eigenvalue"});
  rep.rows.push_back({"cx_growth_proxy", std::isfinite(lip), lip,
                      "max |dc|/|dz| over sampled neighbor pairs"});
  return rep;
}

}  // namespace rg
