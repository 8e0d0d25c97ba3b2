#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "robustgrowth/assumptions.hpp"
#include "robustgrowth/examples.hpp"

using namespace rg;

namespace {

struct BetaSetup {
  MarketModel mm;
  GridPtr g;
  AveragedFields av;
};

const BetaSetup& beta_default() {
  static const BetaSetup s = [] {
    BetaSetup b{beta_model(BetaParams{}), nullptr, {}};
    b.g = build_grid(b.mm, {401, 401}, 1e-3);
    b.av = average_fields(b.mm, b.g);
    return b;
  }();
  return s;
}

const SweepValues& find_item(const AssumptionReport& r, const char* name) {
  for (const auto& s : r.integrals)
    if (s.name == name) return s;
  REQUIRE(false);
  return r.integrals.front();
}

// closed-form averaged profiles of the default Beta family
AveragedFields closed_form_profiles(int n) {
  auto g1 = make_grid({make_axis(0.0, 1.0, 1e-3, n)}, 1);
  auto g2 = make_grid({make_axis(0.0, 1.0, 1e-3, n)}, 0);
  AveragedFields av;
  av.A = make_field(g1, 1);
  av.B = make_field(g2, 1);
  for (std::int64_t k = 0; k < n; ++k) {
    const double x = g1->axes[0].x[k];
    av.A.at(k) = 6.0 * x * x * (1.0 - x) * (1.0 - x) * (x - x * x + 0.7);
    const double y = g2->axes[0].x[k];
    av.B.at(k) = 6.0 * y * y * (1.0 - y) * (1.0 - y);
  }
  return av;
}

}  // namespace

TEST_CASE("cutoff energies reproduce closed-form profiles") {
  AveragedFields av = closed_form_profiles(4001);
  EnergyTable et = test_function_energies(av, {4, 8, 16, 32});

  REQUIRE(et.n.size() == 4);
  CHECK(et.e_phi[0] == doctest::Approx(1.556711).epsilon(1e-4));
  CHECK(et.e_phi[1] == doctest::Approx(1.503051).epsilon(1e-4));
  CHECK(et.e_phi[2] == doctest::Approx(0.874202).epsilon(1e-4));
  CHECK(et.e_phi[3] == doctest::Approx(0.460969).epsilon(1e-4));
  CHECK(et.e_psi[0] == doctest::Approx(1.675164).epsilon(1e-4));
  CHECK(et.e_psi[1] == doctest::Approx(1.753686).epsilon(1e-4));
  CHECK(et.e_psi[2] == doctest::Approx(1.107808).epsilon(1e-4));
  CHECK(et.e_psi[3] == doctest::Approx(0.616897).epsilon(1e-4));
  CHECK(et.phi_decreasing);
  CHECK(et.psi_decreasing);

  // decay factor at least 1.5 per halving once the ramps are disjoint
  CHECK(et.e_phi[1] / et.e_phi[2] >= 1.5);
  CHECK(et.e_phi[2] / et.e_phi[3] >= 1.5);
  CHECK(et.e_psi[1] / et.e_psi[2] >= 1.5);
  CHECK(et.e_psi[2] / et.e_psi[3] >= 1.5);
}

TEST_CASE("flat averaged covariance defeats the cutoff construction") {
  AveragedFields av = closed_form_profiles(4001);
  for (auto& v : av.A.a) v = 1.0;
  EnergyTable et = test_function_energies(av, {4, 8, 16, 32});

  // the energy grows linearly in n instead of vanishing
  CHECK(et.e_phi[0] == doctest::Approx(5.4026).epsilon(1e-4));
  CHECK(et.e_phi[1] == doctest::Approx(12.5368).epsilon(1e-4));
  CHECK(et.e_phi[2] == doctest::Approx(25.0736).epsilon(1e-4));
  CHECK(et.e_phi[3] == doctest::Approx(50.1472).epsilon(1e-4));
  CHECK(et.e_phi[3] / et.e_phi[2] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK_FALSE(et.phi_decreasing);
  CHECK(et.psi_decreasing);
}

TEST_CASE("cutoff construction rejects unusable inputs") {
  AveragedFields av = closed_form_profiles(4001);

  AveragedFields coarse = av;
  auto g3 = make_grid({make_axis(0.0, 1.0, 1e-3, 11)}, 1);
  coarse.A = make_field(g3, 1);
  for (auto& v : coarse.A.a) v = 1.0;
  CHECK_THROWS_AS(test_function_energies(coarse, {32}), ResolutionTooCoarse);
  CHECK_NOTHROW(test_function_energies(coarse, {4}));

  AveragedFields wide = av;
  auto g4 = make_grid(
      {make_axis(0.0, 1.0, 1e-3, 21), make_axis(0.0, 1.0, 1e-3, 21)}, 2);
  wide.A = make_field(g4, 1);
  CHECK_THROWS_AS(test_function_energies(wide, {4}), WrongSetting);

  CHECK_THROWS_AS(test_function_energies(av, {1}), BadConfig);
}

TEST_CASE("audit certifies the reference model") {
  const BetaSetup& b = beta_default();
  AssumptionReport r = audit_assumptions(b.mm, b.av, 0.0);

  CHECK(r.concave);
  CHECK(r.k == 2.0);
  CHECK(r.rho_margin > 0.0);
  CHECK(r.ok());

  for (const auto& s : r.integrals) {
    CHECK(s.stable);
    CHECK(std::isfinite(s.value[2]));
  }

  // the weight-mass probe has a closed form: the factor integral collapses
  // to 36 x(1-x) times the truncated factor width, maximized near x = 1/2
  const auto& mass = find_item(r, "weight-mass");
  CHECK(mass.value[0] == doctest::Approx(36.0 * 0.25 * 0.998).epsilon(1e-6));
  CHECK(mass.value[2] == doctest::Approx(36.0 * 0.25 * 0.99950).epsilon(1e-5));

  const auto& de = find_item(r, "drift-energy");
  CHECK(de.value[0] == doctest::Approx(3.802850088).epsilon(1e-6));
  CHECK(de.value[2] == doctest::Approx(3.818142646).epsilon(1e-6));
  CHECK(de.rel_change < 5e-2);

  const auto& dv = find_item(r, "divergence-term");
  CHECK(dv.value[0] == doctest::Approx(39.20654758).epsilon(1e-5));

  // the signed flux integral cancels toward zero under truncation
  const auto& fx = find_item(r, "flux-divergence");
  CHECK(std::abs(fx.value[1]) < std::abs(fx.value[0]));
  CHECK(std::abs(fx.value[2]) < std::abs(fx.value[1]));

  REQUIRE(r.energy_n == std::vector<int>{4, 8, 16, 32});
  CHECK(r.energies_decreasing);
  CHECK(r.energy_phi[2] / r.energy_phi[3] >= 1.5);
  CHECK(r.energy_psi[2] / r.energy_psi[3] >= 1.5);
  CHECK(r.energy_phi[3] == doctest::Approx(0.460969).epsilon(5e-3));

  // forcing the exponent reproduces or breaks the certificate
  AssumptionReport r2 = audit_assumptions(b.mm, b.av, 2.0);
  CHECK(r2.concave);
  CHECK(r2.rho_margin > 0.0);
  AssumptionReport r1 = audit_assumptions(b.mm, b.av, 1.0);
  CHECK_FALSE(r1.concave);
  CHECK(r1.rho_margin < 0.0);
}

TEST_CASE("audit flags a weight whose roots stay convex") {
  const BetaSetup& b = beta_default();
  MarketModel mm = b.mm;
  mm.name = "beta-steep-factor";
  mm.analytic = nullptr;  // modified factor covariance invalidates the hooks
  mm.c_y = [](const double*, const double* y, double* o) {
    const double t = y[0] * (1.0 - y[0]);
    o[0] = t * t * t * t * t;
  };
  auto g = build_grid(mm, {101, 101}, 1e-3);
  AveragedFields av = average_fields(mm, g);

  AssumptionReport r = audit_assumptions(mm, av, 0.0);
  CHECK_FALSE(r.concave);
  CHECK(r.rho_margin < 0.0);
  CHECK_FALSE(r.ok());
}

TEST_CASE("truncation sweeps expose a divergent drift energy") {
  // interior-singular density: the drift energy integrand grows like
  // x^{-5/2} near the left edge, so eps-halving scales it by 2^{3/2}
  MarketModel mm;
  mm.name = "left-singular";
  mm.d = mm.m = 1;
  mm.ebox = Box{{0.0}, {1.0}};
  mm.dbox = Box{{0.0}, {1.0}};
  mm.c_x = [](const double*, const double*, double* o) { o[0] = 1.0; };
  mm.c_y = [](const double*, const double* y, double* o) {
    o[0] = y[0] * (1.0 - y[0]);
  };
  mm.density = [](const double* x, const double* y) {
    return 0.5 / std::sqrt(x[0]) * 6.0 * y[0] * (1.0 - y[0]);
  };
  auto g = build_grid(mm, {201, 201}, 1e-3);
  AveragedFields av = average_fields(mm, g);

  AssumptionReport r = audit_assumptions(mm, av, 0.0);
  const auto& de = find_item(r, "drift-energy");
  CHECK(de.value[1] > de.value[0]);
  CHECK(de.value[2] > de.value[1]);
  CHECK(de.value[2] - de.value[1] > de.value[1] - de.value[0]);
  CHECK_FALSE(de.stable);
  CHECK_FALSE(r.ok());
}
