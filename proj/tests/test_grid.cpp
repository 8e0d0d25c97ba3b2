#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "robustgrowth/field.hpp"
#include "robustgrowth/grid.hpp"

using namespace rg;

TEST_CASE("axis nodes and trapezoid weights") {
  Axis ax = make_axis(0.0, 1.0, 1e-3, 401);
  CHECK(ax.n == 401);
  CHECK(ax.x.front() == doctest::Approx(0.001).epsilon(1e-14));
  CHECK(ax.x.back() == doctest::Approx(0.999).epsilon(1e-14));
  CHECK(ax.h == doctest::Approx(0.998 / 400).epsilon(1e-14));

  double wsum = 0.0;
  for (double w : ax.w) wsum += w;
  CHECK(wsum == doctest::Approx(0.998).epsilon(1e-13));
}

TEST_CASE("axis rejects bad arguments") {
  CHECK_THROWS_AS(make_axis(1.0, 0.0, 0.0, 11), BadDomain);
  CHECK_THROWS_AS(make_axis(0.0, 1.0, 0.6, 11), BadDomain);
  CHECK_THROWS_AS(make_axis(0.0, 1.0, -1e-3, 11), BadDomain);
  CHECK_THROWS_AS(make_axis(0.0, 1.0, 0.0, 2), BadResolution);
}

TEST_CASE("grid flat index round trip and coords") {
  auto g = make_grid({make_axis(0, 1, 0, 5), make_axis(0, 2, 0, 7),
                      make_axis(0, 1, 0, 3)},
                     2);
  CHECK(g->n_nodes == 5 * 7 * 3);
  CHECK(g->dx == 2);
  CHECK(g->dy() == 1);
  // last axis fastest
  CHECK(g->strides[2] == 1);
  CHECK(g->strides[1] == 3);
  CHECK(g->strides[0] == 21);

  int idx[3] = {3, 5, 1};
  const auto k = g->flat(idx);
  int back[3];
  g->unflat(k, back);
  CHECK(back[0] == 3);
  CHECK(back[1] == 5);
  CHECK(back[2] == 1);

  double z[3];
  g->coords(k, z);
  CHECK(z[0] == doctest::Approx(0.75));
  CHECK(z[1] == doctest::Approx(2.0 * 5 / 6));
  CHECK(z[2] == doctest::Approx(0.5));
}

TEST_CASE("quadrature weights integrate polynomials") {
  auto g = make_grid({make_axis(0, 1, 0, 101)}, 1);
  Field f = make_field(g, 1);
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    const double x = g->axes[0].x[k];
    f.at(k) = x * x;
  }
  // composite trapezoid error for x^2 is h^2/6 on [0,1]
  CHECK(quad_sum(f) == doctest::Approx(1.0 / 3.0).epsilon(6e-5));
  CHECK(std::abs(quad_sum(f) - 1.0 / 3.0) <= 2e-5);

  // linear functions are integrated exactly
  for (std::int64_t k = 0; k < g->n_nodes; ++k)
    f.at(k) = 2.0 - 3.0 * g->axes[0].x[k];
  CHECK(quad_sum(f) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("tensor quadrature and volume") {
  auto g = make_grid({make_axis(0, 1, 1e-3, 41), make_axis(0, 1, 1e-3, 31)}, 1);
  double wsum = 0.0;
  for (std::int64_t k = 0; k < g->n_nodes; ++k) wsum += g->wq[k];
  CHECK(wsum == doctest::Approx(0.998 * 0.998).epsilon(1e-13));
  CHECK(g->volume() == doctest::Approx(0.998 * 0.998).epsilon(1e-13));
}

TEST_CASE("sub grids split endogenous and exogenous axes") {
  auto g = make_grid({make_axis(0, 1, 0, 11), make_axis(0, 1, 0, 9),
                      make_axis(-1, 1, 0, 5)},
                     2);
  auto ge = endo_grid(g);
  auto gd = exo_grid(g);
  CHECK(ge->dim() == 2);
  CHECK(ge->n_nodes == 99);
  CHECK(gd->dim() == 1);
  CHECK(gd->n_nodes == 5);
  CHECK(gd->axes[0].lo == -1.0);
}

TEST_CASE("multilinear interpolation reproduces multilinear functions") {
  auto g = make_grid({make_axis(0, 1, 0, 17), make_axis(0, 1, 0, 13)}, 2);
  Field f = make_field(g, 2);
  auto fn0 = [](double x, double y) { return 2.0 + 3.0 * x - y + 0.5 * x * y; };
  auto fn1 = [](double x, double y) { return -1.0 + x + 2.0 * y; };
  int idx[2];
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    g->unflat(k, idx);
    const double x = g->axes[0].x[idx[0]], y = g->axes[1].x[idx[1]];
    f.at(k, 0) = fn0(x, y);
    f.at(k, 1) = fn1(x, y);
  }
  const double pts[][2] = {{0.3171, 0.77}, {0.0, 0.0}, {1.0, 1.0}, {0.5, 0.011}};
  for (const auto& p : pts) {
    double out[2];
    interp_all(f, p, out);
    CHECK(out[0] == doctest::Approx(fn0(p[0], p[1])).epsilon(1e-13));
    CHECK(out[1] == doctest::Approx(fn1(p[0], p[1])).epsilon(1e-13));
    CHECK(interp(f, 0, p) == doctest::Approx(fn0(p[0], p[1])).epsilon(1e-13));
  }
  // clamped outside the box
  const double q[2] = {-0.5, 0.5};
  CHECK(interp(f, 1, q) == doctest::Approx(fn1(0.0, 0.5)).epsilon(1e-13));
}

TEST_CASE("interpolation error is second order for smooth fields") {
  double prev = 0.0;
  for (int n : {51, 101}) {
    auto g = make_grid({make_axis(0, 1, 0, n)}, 1);
    Field f = make_field(g, 1);
    for (std::int64_t k = 0; k < g->n_nodes; ++k)
      f.at(k) = std::sin(3.0 * g->axes[0].x[k]);
    double err = 0.0;
    for (int i = 0; i < 500; ++i) {
      const double x = (i + 0.5) / 500.0;
      err = std::max(err, std::abs(interp(f, 0, &x) - std::sin(3.0 * x)));
    }
    if (prev > 0.0) CHECK(prev / err > 3.0);  // ~4x per halving
    prev = err;
  }
}
