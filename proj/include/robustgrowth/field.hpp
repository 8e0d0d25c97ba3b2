#pragma once

#include <vector>

#include "robustgrowth/grid.hpp"

namespace rg {

// Nodal values on a Grid, nc components per node, node-major storage.
// Matrix-valued fields store row-major r x r blocks per node.
struct Field {
  GridPtr g;
  int nc = 1;
  std::vector<double> a;

  double& at(std::int64_t node, int c = 0) { return a[node * nc + c]; }
  double at(std::int64_t node, int c = 0) const { return a[node * nc + c]; }
  double* row(std::int64_t node) { return a.data() + node * nc; }
  const double* row(std::int64_t node) const { return a.data() + node * nc; }
  std::int64_t nodes() const { return g ? g->n_nodes : 0; }
};

Field make_field(const GridPtr& g, int nc = 1);

// Multilinear interpolation with clamping to the truncated box.
double interp(const Field& f, int c, const double* z);
void interp_all(const Field& f, const double* z, double* out);

// Quadrature of one component: sum_k wq_k * f_k.
double quad_sum(const Field& f, int c = 0);
// Quadrature-weighted mean of one component over the truncated box.
double quad_mean(const Field& f, int c = 0);
double max_abs(const Field& f, int c = 0);

}  // namespace rg
