#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "robustgrowth/errors.hpp"

namespace rg {

// Uniform 1-D grid on the eps-truncated interval [lo+eps, hi-eps], with
// trapezoid quadrature weights.
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  double eps = 0.0;
  int n = 0;
  double h = 0.0;
  std::vector<double> x;  // nodes, ascending
  std::vector<double> w;  // trapezoid weights, sum == (b - a)

  double a() const { return lo + eps; }
  double b() const { return hi - eps; }
  double width() const { return b() - a(); }
};

Axis make_axis(double lo, double hi, double eps, int n);

// Tensor-product grid over the truncated state space.  The first `dx` axes
// span the endogenous box, the remaining axes the exogenous box.  Flat node
// order is row-major with the last axis fastest, so for the usual layout
// (endogenous axes first) all exogenous nodes of one x-slice are contiguous.
struct Grid {
  std::vector<Axis> axes;
  int dx = 0;
  std::vector<std::int64_t> strides;
  std::int64_t n_nodes = 0;
  std::vector<double> wq;  // per-node quadrature weight (product of axis weights)

  int dim() const { return static_cast<int>(axes.size()); }
  int dy() const { return dim() - dx; }

  std::int64_t flat(const int* idx) const {
    std::int64_t k = 0;
    for (int a = 0; a < dim(); ++a) k += strides[a] * idx[a];
    return k;
  }
  void unflat(std::int64_t k, int* idx) const {
    for (int a = 0; a < dim(); ++a) {
      idx[a] = static_cast<int>(k / strides[a]);
      k -= idx[a] * strides[a];
    }
  }
  void coords(std::int64_t k, double* z) const {
    for (int a = 0; a < dim(); ++a) {
      auto i = k / strides[a];
      k -= i * strides[a];
      z[a] = axes[a].x[static_cast<int>(i)];
    }
  }
  double volume() const {
    double v = 1.0;
    for (const auto& ax : axes) v *= ax.width();
    return v;
  }
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr make_grid(std::vector<Axis> axes, int dx);

// Sub-grid over a contiguous range of axes (used to split E x D products).
GridPtr sub_grid(const GridPtr& g, int first_axis, int count, int dx);
GridPtr endo_grid(const GridPtr& g);
GridPtr exo_grid(const GridPtr& g);

}  // namespace rg
