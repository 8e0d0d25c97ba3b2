#include "robustgrowth/grid.hpp"

#include <cmath>

namespace rg {

Axis make_axis(double lo, double hi, double eps, int n) {
  if (!(hi > lo)) throw BadDomain("axis: hi must exceed lo");
  if (!(eps >= 0.0) || 2.0 * eps >= hi - lo)
    throw BadDomain("axis: eps must satisfy 0 <= 2*eps < hi-lo");
  if (n < 3) throw BadResolution("axis: need at least 3 nodes");

  Axis ax;
  ax.lo = lo;
  ax.hi = hi;
  ax.eps = eps;
  ax.n = n;
  ax.h = (ax.b() - ax.a()) / (n - 1);
  ax.x.resize(n);
  ax.w.resize(n, ax.h);
  for (int i = 0; i < n; ++i) ax.x[i] = ax.a() + i * ax.h;
  ax.x[n - 1] = ax.b();  // avoid accumulated rounding at the far end
  ax.w[0] = 0.5 * ax.h;
  ax.w[n - 1] = 0.5 * ax.h;
  return ax;
}

GridPtr make_grid(std::vector<Axis> axes, int dx) {
  if (axes.empty()) throw BadDomain("grid: no axes");
  if (dx < 0 || dx > static_cast<int>(axes.size()))
    throw BadDomain("grid: bad endogenous axis count");

  auto g = std::make_shared<Grid>();
  g->axes = std::move(axes);
  g->dx = dx;
  const int dim = g->dim();
  g->strides.assign(dim, 1);
  for (int a = dim - 2; a >= 0; --a)
    g->strides[a] = g->strides[a + 1] * g->axes[a + 1].n;
  g->n_nodes = g->strides[0] * g->axes[0].n;

  g->wq.resize(static_cast<std::size_t>(g->n_nodes));
  std::vector<int> idx(dim, 0);
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    g->unflat(k, idx.data());
    double w = 1.0;
    for (int a = 0; a < dim; ++a) w *= g->axes[a].w[idx[a]];
    g->wq[static_cast<std::size_t>(k)] = w;
  }
  return g;
}

GridPtr sub_grid(const GridPtr& g, int first_axis, int count, int dx) {
  if (first_axis < 0 || count < 1 || first_axis + count > g->dim())
    throw BadDomain("sub_grid: axis range out of bounds");
  std::vector<Axis> axes(g->axes.begin() + first_axis,
                         g->axes.begin() + first_axis + count);
  return make_grid(std::move(axes), dx);
}

GridPtr endo_grid(const GridPtr& g) {
  if (g->dx == 0) throw BadDomain("endo_grid: grid has no endogenous axes");
  return sub_grid(g, 0, g->dx, g->dx);
}

GridPtr exo_grid(const GridPtr& g) {
  if (g->dy() == 0) throw BadDomain("exo_grid: grid has no exogenous axes");
  return sub_grid(g, g->dx, g->dy(), 0);
}

}  // namespace rg
