#include "robustgrowth/examples.hpp"

#include <cmath>

namespace rg {

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {

// pow with fast paths for the exponents the families actually use
double fpow(double t, double e) {
  if (e == 0.0) return 1.0;
  if (e == 1.0) return t;
  if (e == 2.0) return t * t;
  if (e == 0.5) return std::sqrt(t);
  return std::pow(t, e);
}

double beta_pdf(double t, double a, double b, double lognorm) {
  return std::exp((a - 1.0) * std::log(t) + (b - 1.0) * std::log(1.0 - t) -
                  lognorm);
}

// 1-D trapezoid of fn over [lo, hi]
template <class F>
double fine_quad(F&& fn, double lo, double hi, int n) {
  const double h = (hi - lo) / (n - 1);
  double s = 0.5 * (fn(lo) + fn(hi));
  for (int i = 1; i < n - 1; ++i) s += fn(lo + i * h);
  return s * h;
}

}  // namespace

std::vector<std::string> check_beta_params(const BetaParams& p) {
  std::vector<std::string> bad;
  auto need = [&](bool ok, const char* what) {
    if (!ok) bad.push_back(what);
  };
  need(p.sigma > 0.0, "sigma > 0");
  need(p.q1 >= 0.0, "q1 >= 0");
  need(p.q2 >= 0.0, "q2 >= 0");
  need(p.a1 > 0.0, "a1 > 0");
  need(p.a2 > 0.0, "a2 > 0");
  need(p.b1 >= 1.0, "b1 >= 1");
  need(p.b2 >= 1.0, "b2 >= 1");
  need(p.a1 + p.b1 > 2.0, "a1 + b1 > 2");
  need(p.a2 + p.b2 > 2.0, "a2 + b2 > 2");
  need(p.alpha1 > 1.0, "alpha1 > 1");
  need(p.alpha2 > 1.0, "alpha2 > 1");
  need(p.beta1 > 2.0 - p.alpha1 && p.beta1 < 2.0 * p.alpha1 - 1.0,
       "2 - alpha1 < beta1 < 2*alpha1 - 1");
  need(p.beta2 > 2.0 - p.alpha2 && p.beta2 < 2.0 * p.alpha2 - 1.0,
       "2 - alpha2 < beta2 < 2*alpha2 - 1");
  return bad;
}

MarketModel beta_model(const BetaParams& P) {
  auto bad = check_beta_params(P);
  if (!bad.empty()) {
    std::string msg = "beta_model:";
    for (const auto& s : bad) msg += " [" + s + "]";
    throw ParamViolation(msg);
  }

  const double logBx = log_beta(P.a1, P.a2);
  const double logBy = log_beta(P.alpha1, P.alpha2);
  const double s2 = P.sigma * P.sigma;

  MarketModel mm;
  mm.name = "beta";
  mm.d = 1;
  mm.m = 1;
  mm.ebox = {{0.0}, {1.0}};
  mm.dbox = {{0.0}, {1.0}};

  mm.c_x = [P, s2](const double* x, const double* y, double* out) {
    out[0] = s2 * fpow(x[0], P.b1) * fpow(1.0 - x[0], P.b2) *
             fpow(x[0] + y[0], P.q1) * fpow(2.0 - x[0] - y[0], P.q2);
  };
  mm.c_y = [P](const double*, const double* y, double* out) {
    out[0] = fpow(y[0], P.beta1) * fpow(1.0 - y[0], P.beta2);
  };
  mm.density = [P, logBx, logBy](const double* x, const double* y) {
    return beta_pdf(x[0], P.a1, P.a2, logBx) *
           beta_pdf(y[0], P.alpha1, P.alpha2, logBy);
  };

  auto hooks = std::make_shared<AnalyticHooks>();
  hooks->ell_x = [P](const double* x, const double* y, double* out) {
    out[0] = 0.5 * ((P.b1 + P.a1 - 1.0) / x[0] -
                    (P.b2 + P.a2 - 1.0) / (1.0 - x[0]) +
                    P.q1 / (x[0] + y[0]) - P.q2 / (2.0 - x[0] - y[0]));
  };
  hooks->ell_y = [P](const double*, const double* y, double* out) {
    out[0] = (P.alpha1 + P.beta1 - 1.0) / (2.0 * y[0]) -
             (P.alpha2 + P.beta2 - 1.0) / (2.0 * (1.0 - y[0]));
  };
  auto cxp_val = [P, s2, logBx, logBy](double x, double y) {
    return s2 * fpow(x, P.b1) * fpow(1.0 - x, P.b2) * fpow(x + y, P.q1) *
           fpow(2.0 - x - y, P.q2) * beta_pdf(x, P.a1, P.a2, logBx) *
           beta_pdf(y, P.alpha1, P.alpha2, logBy);
  };
  // log-derivative of c_X p in x and its derivative
  auto Lfun = [P](double x, double y) {
    return (P.a1 + P.b1 - 1.0) / x - (P.a2 + P.b2 - 1.0) / (1.0 - x) +
           P.q1 / (x + y) - P.q2 / (2.0 - x - y);
  };
  auto Lx = [P](double x, double y) {
    const double u = x, v = 1.0 - x, s = x + y, t = 2.0 - x - y;
    return -(P.a1 + P.b1 - 1.0) / (u * u) - (P.a2 + P.b2 - 1.0) / (v * v) -
           P.q1 / (s * s) - P.q2 / (t * t);
  };
  hooks->cxp = [cxp_val](const double* x, const double* y, double* out) {
    out[0] = cxp_val(x[0], y[0]);
  };
  hooks->cxp_dx = [cxp_val, Lfun](const double* x, const double* y, int,
                                  double* out) {
    out[0] = cxp_val(x[0], y[0]) * Lfun(x[0], y[0]);
  };
  hooks->cxp_d2 = [cxp_val, Lfun, Lx](const double* x, const double* y, int,
                                      int, double* out) {
    const double L = Lfun(x[0], y[0]);
    out[0] = cxp_val(x[0], y[0]) * (L * L + Lx(x[0], y[0]));
  };
  hooks->marginal_x = [P, logBx](const double* x) {
    return beta_pdf(x[0], P.a1, P.a2, logBx);
  };
  mm.analytic = hooks;

  const bool q_one = (P.q1 == 1.0 && P.q2 == 1.0);
  const bool q_zero = (P.q1 == 0.0 && P.q2 == 0.0);
  if (q_one || q_zero) {
    auto oracle = std::make_shared<ClosedFormOracle>();
    // moments of the y-marginal entering the averaged covariance
    const double r1 = q_one ? std::exp(log_beta(P.alpha1, P.alpha2 + 1.0) - logBy) : 0.0;
    const double r2 = q_one ? std::exp(log_beta(P.alpha1 + 1.0, P.alpha2) - logBy) : 0.0;
    const double r3 = q_one ? std::exp(log_beta(P.alpha1 + 1.0, P.alpha2 + 1.0) - logBy) : 0.0;
    const double e1 = P.a1 + P.b1 - 1.0, e2 = P.a2 + P.b2 - 1.0;
    auto Q = [q_one, r1, r2, r3](double x) {
      return q_one ? x * (1.0 - x) + x * r1 + (1.0 - x) * r2 + r3 : 1.0;
    };
    auto Qp = [q_one, r1, r2](double x) {
      return q_one ? 1.0 - 2.0 * x + r1 - r2 : 0.0;
    };
    auto Afun = [s2, e1, e2, logBx, Q](double x) {
      return s2 * std::exp(e1 * std::log(x) + e2 * std::log(1.0 - x) - logBx) *
             Q(x);
    };
    oracle->phi = [s2, e1, e2, logBx, Q](const double* x) {
      return 0.5 * (std::log(s2) + e1 * std::log(x[0]) +
                    e2 * std::log(1.0 - x[0]) - logBx + std::log(Q(x[0])));
    };
    oracle->theta = [e1, e2, Q, Qp](const double* x, double* out) {
      out[0] = 0.5 * (e1 / x[0] - e2 / (1.0 - x[0]) + Qp(x[0]) / Q(x[0]));
    };
    oracle->lambda_of_eps = [Afun, e1, e2, Q, Qp](double eps) {
      // lambda = (1/8) int A'^2 / A with A' = A * (e1/x - e2/(1-x) + Q'/Q)
      auto integrand = [&](double x) {
        const double dlog =
            e1 / x - e2 / (1.0 - x) + Qp(x) / Q(x);
        return Afun(x) * dlog * dlog;
      };
      return 0.125 * fine_quad(integrand, eps, 1.0 - eps, 200001);
    };
    oracle->lambda = oracle->lambda_of_eps(1e-3);
    oracle->note = q_one ? "cross powers = 1" : "cross powers = 0";
    mm.oracle = oracle;
  }
  return mm;
}

MarketModel exogenous_model() {
  const double logB33 = log_beta(3.0, 3.0);
  const double logB22 = log_beta(2.0, 2.0);

  MarketModel mm;
  mm.name = "exogenous";
  mm.d = 1;
  mm.m = 1;
  mm.ebox = {{0.0}, {1.0}};
  mm.dbox = {{0.0}, {1.0}};
  mm.c_x = [](const double*, const double* y, double* out) {
    out[0] = 1.0 + y[0] * y[0];
  };
  mm.c_y = [](const double*, const double* y, double* out) {
    out[0] = y[0] * (1.0 - y[0]);
  };
  mm.density = [logB33, logB22](const double* x, const double* y) {
    return beta_pdf(x[0], 3.0, 3.0, logB33) * beta_pdf(y[0], 2.0, 2.0, logB22);
  };

  auto hooks = std::make_shared<AnalyticHooks>();
  auto dlogpx = [](double x) { return 2.0 / x - 2.0 / (1.0 - x); };
  hooks->ell_x = [dlogpx](const double* x, const double*, double* out) {
    out[0] = 0.5 * dlogpx(x[0]);
  };
  hooks->ell_y = [](const double*, const double* y, double* out) {
    // same structure as the Beta family with alpha = 2, edge power 1
    out[0] = 1.0 / y[0] - 1.0 / (1.0 - y[0]);
  };
  auto pxy = [logB33, logB22](double x, double y) {
    return beta_pdf(x, 3.0, 3.0, logB33) * beta_pdf(y, 2.0, 2.0, logB22);
  };
  hooks->cxp = [pxy](const double* x, const double* y, double* out) {
    out[0] = (1.0 + y[0] * y[0]) * pxy(x[0], y[0]);
  };
  hooks->cxp_dx = [pxy, dlogpx](const double* x, const double* y, int,
                                double* out) {
    out[0] = (1.0 + y[0] * y[0]) * pxy(x[0], y[0]) * dlogpx(x[0]);
  };
  hooks->cxp_d2 = [pxy, dlogpx](const double* x, const double* y, int, int,
                                double* out) {
    const double L = dlogpx(x[0]);
    const double Lp = -2.0 / (x[0] * x[0]) - 2.0 / ((1.0 - x[0]) * (1.0 - x[0]));
    out[0] = (1.0 + y[0] * y[0]) * pxy(x[0], y[0]) * (L * L + Lp);
  };
  hooks->marginal_x = [logB33](const double* x) {
    return beta_pdf(x[0], 3.0, 3.0, logB33);
  };
  mm.analytic = hooks;

  auto oracle = std::make_shared<ClosedFormOracle>();
  oracle->phi = [logB33](const double* x) {
    return 0.5 * (2.0 * std::log(x[0]) + 2.0 * std::log(1.0 - x[0]) - logB33);
  };
  oracle->theta = [](const double* x, double* out) {
    out[0] = 1.0 / x[0] - 1.0 / (1.0 - x[0]);
  };
  oracle->lambda_of_eps = [logB33, logB22](double eps) {
    auto abar = [&](double y) {
      return (1.0 + y * y) * beta_pdf(y, 2.0, 2.0, logB22);
    };
    auto xint = [&](double x) {
      const double dl = 2.0 / x - 2.0 / (1.0 - x);
      return dl * dl * beta_pdf(x, 3.0, 3.0, logB33);
    };
    return 0.125 * fine_quad(abar, eps, 1.0 - eps, 200001) *
           fine_quad(xint, eps, 1.0 - eps, 200001);
  };
  oracle->lambda = oracle->lambda_of_eps(1e-3);
  oracle->note = "potential is half the log marginal";
  mm.oracle = oracle;
  return mm;
}

MarketModel tractable_model() {
  const double logB33 = log_beta(3.0, 3.0);
  const double logB22 = log_beta(2.0, 2.0);

  MarketModel mm;
  mm.name = "tractable";
  mm.d = 2;
  mm.m = 1;
  mm.ebox = {{0.0, 0.0}, {1.0, 1.0}};
  mm.dbox = {{0.0}, {1.0}};
  mm.c_x = [](const double* x, const double*, double* out) {
    out[0] = 1.0 + x[0];
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 1.0;
  };
  mm.c_y = [](const double*, const double* y, double* out) {
    out[0] = y[0] * (1.0 - y[0]);
  };
  mm.density = [logB33, logB22](const double* x, const double* y) {
    return beta_pdf(x[0], 3.0, 3.0, logB33) * beta_pdf(x[1], 3.0, 3.0, logB33) *
           beta_pdf(y[0], 2.0, 2.0, logB22);
  };

  auto hooks = std::make_shared<AnalyticHooks>();
  auto dlog33 = [](double t) { return 2.0 / t - 2.0 / (1.0 - t); };
  hooks->ell_x = [dlog33](const double* x, const double*, double* out) {
    out[0] = 0.5 / (1.0 + x[0]) + 0.5 * dlog33(x[0]);
    out[1] = 0.5 * dlog33(x[1]);
  };
  hooks->ell_y = [](const double*, const double* y, double* out) {
    out[0] = 1.0 / y[0] - 1.0 / (1.0 - y[0]);
  };
  auto px = [logB33](const double* x) {
    return beta_pdf(x[0], 3.0, 3.0, logB33) * beta_pdf(x[1], 3.0, 3.0, logB33);
  };
  hooks->cxp = [px, logB22](const double* x, const double* y, double* out) {
    const double p = px(x) * beta_pdf(y[0], 2.0, 2.0, logB22);
    out[0] = (1.0 + x[0]) * p;
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = p;
  };
  hooks->cxp_dx = [px, logB22, dlog33](const double* x, const double* y, int j,
                                       double* out) {
    const double p = px(x) * beta_pdf(y[0], 2.0, 2.0, logB22);
    const double L = dlog33(x[j]);
    if (j == 0) {
      out[0] = p + (1.0 + x[0]) * p * L;
      out[3] = p * L;
    } else {
      out[0] = (1.0 + x[0]) * p * L;
      out[3] = p * L;
    }
    out[1] = 0.0;
    out[2] = 0.0;
  };
  hooks->marginal_x = px;
  mm.analytic = hooks;

  auto oracle = std::make_shared<ClosedFormOracle>();
  oracle->phi = [px](const double* x) {
    return 0.5 * (std::log(1.0 + x[0]) + std::log(px(x)));
  };
  oracle->theta = [dlog33](const double* x, double* out) {
    out[0] = 0.5 / (1.0 + x[0]) + 0.5 * dlog33(x[0]);
    out[1] = 0.5 * dlog33(x[1]);
  };
  oracle->note = "gradient-case potential: half log of (1+x1) p_X";
  mm.oracle = oracle;
  return mm;
}

const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries = [] {
    std::vector<CatalogEntry> v;
    v.push_back({"beta-default",
                 "two-sided Beta family at the symmetric default parameters",
                 [] { return beta_model(BetaParams{}); },
                 {401, 401},
                 1e-3,
                 {0.2},
                 {0.8},
                 {0.1},
                 {0.9}});
    v.push_back({"beta-skew",
                 "asymmetric Beta parameters with heavier left tail",
                 [] {
                   BetaParams p;
                   p.a1 = 2.0;
                   p.a2 = 3.0;
                   p.b1 = 1.5;
                   p.b2 = 1.0;
                   p.alpha1 = 2.5;
                   p.alpha2 = 2.0;
                   p.beta1 = 1.5;
                   p.beta2 = 1.0;
                   return beta_model(p);
                 },
                 {401, 401},
                 1e-3,
                 {0.2},
                 {0.8},
                 {0.1},
                 {0.9}});
    v.push_back({"exogenous-basic",
                 "covariance driven only by the exogenous factor",
                 [] { return exogenous_model(); },
                 {401, 401},
                 1e-3,
                 {0.2},
                 {0.8},
                 {0.1},
                 {0.9}});
    v.push_back({"tractable-basic",
                 "separable 2-asset model with exact gradient drift",
                 [] { return tractable_model(); },
                 {301, 301, 301},
                 1e-3,
                 {0.2, 0.2},
                 {0.8, 0.8},
                 {0.1, 0.1},
                 {0.9, 0.9}});
    return v;
  }();
  return entries;
}

const CatalogEntry* find_example(const std::string& name) {
  for (const auto& e : catalog())
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace rg
