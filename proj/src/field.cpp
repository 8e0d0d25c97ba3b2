#include "robustgrowth/field.hpp"

#include <algorithm>
#include <cmath>

namespace rg {

Field make_field(const GridPtr& g, int nc) {
  Field f;
  f.g = g;
  f.nc = nc;
  f.a.assign(static_cast<std::size_t>(g->n_nodes) * nc, 0.0);
  return f;
}

namespace {

struct Cell {
  std::int64_t base = 0;
  double t[8];       // fractional offset per axis
  int dim = 0;
};

Cell locate(const Grid& g, const double* z) {
  Cell c;
  c.dim = g.dim();
  for (int a = 0; a < c.dim; ++a) {
    const Axis& ax = g.axes[a];
    double s = (z[a] - ax.a()) / ax.h;
    int i = static_cast<int>(std::floor(s));
    i = std::clamp(i, 0, ax.n - 2);
    double t = std::clamp(s - i, 0.0, 1.0);
    c.base += g.strides[a] * i;
    c.t[a] = t;
  }
  return c;
}

}  // namespace

double interp(const Field& f, int c, const double* z) {
  const Grid& g = *f.g;
  Cell cell = locate(g, z);
  const int dim = cell.dim;
  double acc = 0.0;
  const int corners = 1 << dim;
  for (int m = 0; m < corners; ++m) {
    double w = 1.0;
    std::int64_t node = cell.base;
    for (int a = 0; a < dim; ++a) {
      if (m & (1 << a)) {
        w *= cell.t[a];
        node += g.strides[a];
      } else {
        w *= 1.0 - cell.t[a];
      }
    }
    acc += w * f.at(node, c);
  }
  return acc;
}

void interp_all(const Field& f, const double* z, double* out) {
  const Grid& g = *f.g;
  Cell cell = locate(g, z);
  const int dim = cell.dim;
  for (int c = 0; c < f.nc; ++c) out[c] = 0.0;
  const int corners = 1 << dim;
  for (int m = 0; m < corners; ++m) {
    double w = 1.0;
    std::int64_t node = cell.base;
    for (int a = 0; a < dim; ++a) {
      if (m & (1 << a)) {
        w *= cell.t[a];
        node += g.strides[a];
      } else {
        w *= 1.0 - cell.t[a];
      }
    }
    const double* v = f.row(node);
    for (int c = 0; c < f.nc; ++c) out[c] += w * v[c];
  }
}

double quad_sum(const Field& f, int c) {
  double s = 0.0;
  for (std::int64_t k = 0; k < f.nodes(); ++k) s += f.g->wq[k] * f.at(k, c);
  return s;
}

double quad_mean(const Field& f, int c) {
  return quad_sum(f, c) / f.g->volume();
}

double max_abs(const Field& f, int c) {
  double m = 0.0;
  for (std::int64_t k = 0; k < f.nodes(); ++k)
    m = std::max(m, std::abs(f.at(k, c)));
  return m;
}

}  // namespace rg
