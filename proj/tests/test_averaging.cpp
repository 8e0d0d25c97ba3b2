#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "robustgrowth/averaging.hpp"
#include "robustgrowth/examples.hpp"

using namespace rg;

namespace {

// closed-form averaged covariance of the default Beta parameters
double A_exact(double x) {
  return 6.0 * x * x * (1 - x) * (1 - x) * (x - x * x + 0.7);
}
double A_exact_d(double x) {
  const double Q = x - x * x + 0.7;
  return A_exact(x) * (2.0 / x - 2.0 / (1 - x) + (1 - 2 * x) / Q);
}

}  // namespace

TEST_CASE("averaged fields match the beta closed forms") {
  MarketModel mm = beta_model(BetaParams{});
  auto g = build_grid(mm, {401, 401}, 1e-3);
  AveragedFields av = average_fields(mm, g);

  CHECK(av.d_volume == doctest::Approx(0.998).epsilon(1e-12));

  auto ge = av.A.g;
  // node 200 sits at the midpoint of the truncated interval
  const double x_mid = ge->axes[0].x[200];
  CHECK(x_mid == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(av.A.at(200) == doctest::Approx(0.35625).epsilon(2e-5));
  CHECK(std::abs(av.A.at(200) - A_exact(x_mid)) <= 5e-6);
  CHECK(std::abs(av.divA.at(200) - A_exact_d(x_mid)) <= 1e-5);

  const double x_q = ge->axes[0].x[100];
  CHECK(std::abs(av.A.at(100) - A_exact(x_q)) <= 5e-6);
  CHECK(A_exact(0.25) == doctest::Approx(0.18720703125).epsilon(1e-12));
  CHECK(std::abs(av.divA.at(100) - A_exact_d(x_q)) <= 3e-5);

  // marginal and cbar
  const double px_mid = av.pX.at(200);
  CHECK(px_mid == doctest::Approx(1.5).epsilon(2e-5));
  CHECK(av.cbar.at(200) ==
        doctest::Approx(av.A.at(200) / px_mid).epsilon(1e-14));

  // y-averaged covariance: B(y) ~ c_Y(y) p_Y(y) times the x-mass
  const double y_mid = av.B.g->axes[0].x[200];
  CHECK(y_mid == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(av.B.at(200) - 0.25 * 1.5) <= 1e-5);
}

TEST_CASE("finite difference divergence agrees with the exact hook") {
  MarketModel mm = beta_model(BetaParams{});
  auto g = build_grid(mm, {401, 401}, 1e-3);
  AveragedFields exact = average_fields(mm, g);

  MarketModel plain = mm;
  plain.analytic = nullptr;
  AveragedFields fd = average_fields(plain, g);

  // compare away from the truncation faces where the fields are singular
  double err = 0.0;
  const auto& ax = exact.A.g->axes[0];
  for (std::int64_t k = 0; k < exact.A.nodes(); ++k) {
    if (ax.x[k] < 0.05 || ax.x[k] > 0.95) continue;
    err = std::max(err, std::abs(exact.divA.at(k) - fd.divA.at(k)));
  }
  CHECK(err <= 2e-4);
  // the averaged covariance itself is identical up to quadrature rounding
  double aerr = 0.0;
  for (std::int64_t k = 0; k < exact.A.nodes(); ++k)
    aerr = std::max(aerr, std::abs(exact.A.at(k) - fd.A.at(k)));
  CHECK(aerr <= 1e-14);
}

TEST_CASE("drift fields use analytic closures and match the fd fallback") {
  MarketModel mm = beta_model(BetaParams{});
  auto g = build_grid(mm, {201, 201}, 1e-3);
  DriftFields an = drift_fields(mm, g);

  MarketModel plain = mm;
  plain.analytic = nullptr;
  DriftFields fd = drift_fields(plain, g);

  double ex = 0.0, ey = 0.0;
  std::vector<double> z(2);
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    g->coords(k, z.data());
    if (z[0] < 0.1 || z[0] > 0.9 || z[1] < 0.1 || z[1] > 0.9) continue;
    ex = std::max(ex, std::abs(an.ell_x.at(k) - fd.ell_x.at(k)));
    ey = std::max(ey, std::abs(an.ell_y.at(k) - fd.ell_y.at(k)));
  }
  CHECK(ex <= 5e-3);
  CHECK(ey <= 5e-3);

  // spot value of the drift closure: x part at (0.5, 0.5)
  const double x = 0.5, y = 0.5;
  double v;
  mm.analytic->ell_x(&x, &y, &v);
  // (1/2)(2/x - 2/(1-x) + 1/(x+y) - 1/(2-x-y)) = 0 at the symmetric point
  CHECK(std::abs(v) <= 1e-14);
  mm.analytic->ell_y(&x, &y, &v);
  CHECK(std::abs(v) <= 1e-14);
}

TEST_CASE("averaging rejects a vanishing density") {
  MarketModel mm = beta_model(BetaParams{});
  mm.density = [](const double*, const double*) { return 0.0; };
  mm.analytic = nullptr;
  auto g = build_grid(mm, {11, 11}, 1e-3);
  CHECK_THROWS_AS(average_fields(mm, g), DivideByZeroDensity);
}

TEST_CASE("tractable averaging is diagonal and gradient like") {
  MarketModel mm = tractable_model();
  auto g = build_grid(mm, {41, 41, 41}, 1e-3);
  AveragedFields av = average_fields(mm, g);
  // off-diagonal entries vanish
  for (std::int64_t k = 0; k < av.A.nodes(); ++k) {
    CHECK(std::abs(av.A.at(k, 1)) <= 1e-15);
    CHECK(std::abs(av.A.at(k, 2)) <= 1e-15);
  }
  // A_11 = (1+x1) pX, A_22 = pX up to y-truncation of the density
  int idx[2];
  auto ge = av.A.g;
  for (std::int64_t k = 0; k < av.A.nodes(); k += 97) {
    ge->unflat(k, idx);
    const double x1 = ge->axes[0].x[idx[0]];
    CHECK(av.A.at(k, 0) ==
          doctest::Approx((1.0 + x1) * av.pX.at(k)).epsilon(1e-10));
    CHECK(av.A.at(k, 3) == doctest::Approx(av.pX.at(k)).epsilon(1e-10));
  }
}
