#include "robustgrowth/growth.hpp"

#include <algorithm>
#include <cmath>

namespace rg {

namespace {

Field gamma_field(const Field& A, const Field& divA) {
  const int d = divA.nc;
  Field g = make_field(A.g, d);
  for (std::int64_t k = 0; k < A.nodes(); ++k) {
    double* v = g.row(k);
    for (int i = 0; i < d; ++i) v[i] = divA.at(k, i);
    spd_solve_inplace(A.row(k), d, v);
    for (int i = 0; i < d; ++i) v[i] *= 0.5;
  }
  return g;
}

void demean_quad(Field& f) {
  const double m = quad_mean(f);
  for (auto& v : f.a) v -= m;
}

// cumulative trapezoid of the component-a values of G along axis order perm;
// each pass extends the filled region one axis at a time.
Field path_integrate(const Field& G, const std::vector<int>& perm) {
  const Grid& g = *G.g;
  const int d = g.dim();
  Field h = make_field(G.g, 1);
  std::vector<int> idx(d);
  for (int ai = 0; ai < d; ++ai) {
    const int a = perm[ai];
    const double ha = g.axes[a].h;
    for (std::int64_t k = 0; k < g.n_nodes; ++k) {
      g.unflat(k, idx.data());
      if (idx[a] < 1) continue;
      bool active = true;
      for (int bi = ai + 1; bi < d; ++bi)
        if (idx[perm[bi]] != 0) {
          active = false;
          break;
        }
      if (!active) continue;
      const std::int64_t prev = k - g.strides[a];
      h.at(k) = h.at(prev) + 0.5 * ha * (G.at(prev, a) + G.at(k, a));
    }
  }
  return h;
}

}  // namespace

GradientCheck detect_gradient_case(const Field& A, const Field& divA,
                                   double curl_tol) {
  const GridPtr g = A.g;
  const int d = g->dim();
  GradientCheck res;
  res.G = gamma_field(A, divA);
  for (auto& v : res.G.a) v *= 2.0;  // gamma is G/2

  if (d == 1) {
    res.gradient = true;
    res.h = path_integrate(res.G, {0});
    demean_quad(res.h);
    return res;
  }

  double ginf = 0.0;
  for (int c = 0; c < d; ++c) ginf = std::max(ginf, max_abs(res.G, c));

  Field tmp1 = make_field(g, 1), tmp2 = make_field(g, 1);
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) {
      diff_axis(res.G, b, a, tmp1, 0);  // d G_b / d x_a
      diff_axis(res.G, a, b, tmp2, 0);  // d G_a / d x_b
      for (std::int64_t k = 0; k < g->n_nodes; ++k)
        res.curl_max = std::max(res.curl_max, std::abs(tmp1.at(k) - tmp2.at(k)));

      // truncation floor from second differences of the sampled field
      diff2_axis(res.G, b, a, tmp1, 0);
      diff2_axis(res.G, a, b, tmp2, 0);
      const double ha = g->axes[a].h, hb = g->axes[b].h;
      const double fl = ha * ha / 3.0 * max_abs(tmp1) + hb * hb / 3.0 * max_abs(tmp2);
      res.curl_floor = std::max(res.curl_floor, fl);
    }

  res.gradient =
      res.curl_max <= std::max(curl_tol * std::max(1.0, ginf), res.curl_floor);

  std::vector<int> fwd(d), rev(d);
  for (int a = 0; a < d; ++a) {
    fwd[a] = a;
    rev[a] = d - 1 - a;
  }
  Field h1 = path_integrate(res.G, fwd);
  Field h2 = path_integrate(res.G, rev);
  demean_quad(h1);
  demean_quad(h2);
  for (std::int64_t k = 0; k < g->n_nodes; ++k)
    res.path_consistency =
        std::max(res.path_consistency, std::abs(h1.at(k) - h2.at(k)));
  res.h = std::move(h1);
  return res;
}

double growth_rate(const Field& grad, const Field& A) {
  const int d = grad.nc;
  double s = 0.0;
  for (std::int64_t k = 0; k < grad.nodes(); ++k) {
    const double* gk = grad.row(k);
    const double* Ak = A.row(k);
    double q = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) q += gk[i] * Ak[i * d + j] * gk[j];
    s += grad.g->wq[k] * q;
  }
  return 0.5 * s;
}

namespace {

double quadratic_misfit(const Field& grad, const Field& gamma, const Field& A) {
  const int d = grad.nc;
  double s = 0.0;
  for (std::int64_t k = 0; k < grad.nodes(); ++k) {
    const double* Ak = A.row(k);
    double q = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        q += (gamma.at(k, i) - grad.at(k, i)) * Ak[i * d + j] *
             (gamma.at(k, j) - grad.at(k, j));
    s += grad.g->wq[k] * q;
  }
  return s;
}

double stationarity_residual(const Field& grad, const Field& gamma,
                             const Field& A) {
  const int d = grad.nc;
  Field delta = make_field(grad.g, d);
  for (std::int64_t k = 0; k < grad.nodes(); ++k)
    for (int i = 0; i < d; ++i)
      delta.at(k, i) = grad.at(k, i) - gamma.at(k, i);
  DivFormOperator op{&A, A.g, d};
  std::vector<double> r = op.rhs(delta);
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}

}  // namespace

PhiSolution solve_phi(const Field& A, const Field& divA,
                      const SolveOptions& opts) {
  const GridPtr g = A.g;
  const int d = g->dim();
  Field gamma = gamma_field(A, divA);

  PhiSolution sol;
  bool solved = false;
  if (!opts.force_iterative) {
    if (d == 1) {
      sol.phi = make_field(g, 1);
      for (std::int64_t k = 0; k < g->n_nodes; ++k) {
        if (!(A.at(k) > 0.0))
          throw SingularSystem("solve_phi: averaged covariance not positive");
        sol.phi.at(k) = 0.5 * std::log(A.at(k));
      }
      sol.grad_phi = gamma;
      sol.method = "1d-closed-form";
      solved = true;
    } else {
      GradientCheck gc = detect_gradient_case(A, divA);
      if (gc.gradient) {
        sol.phi = gc.h;
        for (auto& v : sol.phi.a) v *= 0.5;
        sol.grad_phi = gamma;
        sol.method = "gradient-case";
        solved = true;
      }
    }
  }
  if (!solved) {
    DivFormOperator op{&A, g, d};
    std::vector<double> b = op.rhs(gamma);
    std::vector<double> x;
    CgResult cg = cg_zero_mean(op, b, x, opts.cg_tol, opts.max_iter);
    sol.phi = make_field(g, 1);
    sol.phi.a = std::move(x);
    sol.grad_phi = make_field(g, d);
    for (int a = 0; a < d; ++a) diff_axis(sol.phi, 0, a, sol.grad_phi, a);
    sol.method = "fd-solve";
    sol.iterations = cg.iterations;
  }
  demean_quad(sol.phi);
  sol.lambda = growth_rate(sol.grad_phi, A);
  sol.energy = quadratic_misfit(sol.grad_phi, gamma, A);
  sol.residual = stationarity_residual(sol.grad_phi, gamma, A);
  return sol;
}

PhiSolution solve_phi(const AveragedFields& av, const SolveOptions& opts) {
  return solve_phi(av.A, av.divA, opts);
}

double variational_energy(const Field& phi, const Field& A,
                          const Field& divA) {
  const int d = phi.g->dim();
  Field grad = gradient(phi, 0, d);
  Field gamma = gamma_field(A, divA);
  return quadratic_misfit(grad, gamma, A);
}

double variational_energy(const Field& phi, const Field& A) {
  const int d = phi.g->dim();
  Field divA = make_field(phi.g, d);
  Field tmp = make_field(phi.g, 1);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      diff_axis(A, i * d + j, j, tmp, 0);
      for (std::int64_t k = 0; k < phi.g->n_nodes; ++k)
        divA.at(k, i) += tmp.at(k);
    }
  return variational_energy(phi, A, divA);
}

double energy_gateaux(const PhiSolution& sol, const Field& psi, const Field& A,
                      const Field& divA) {
  const int d = sol.grad_phi.nc;
  Field gamma = gamma_field(A, divA);
  Field dpsi = gradient(psi, 0, d);
  double s = 0.0;
  for (std::int64_t k = 0; k < psi.nodes(); ++k) {
    const double* Ak = A.row(k);
    double q = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        q += dpsi.at(k, i) * Ak[i * d + j] *
             (sol.grad_phi.at(k, j) - gamma.at(k, j));
    s += psi.g->wq[k] * q;
  }
  return 2.0 * s;
}

namespace {

double quintic_ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

}  // namespace

double ibp_growth_functional(const Field& phi, const Field& A) {
  const GridPtr g = phi.g;
  const int d = g->dim();

  Field grad = gradient(phi, 0, d);
  // the integration-by-parts form drops boundary terms, so the potential must
  // be flat near the truncated faces; taper it there when it is not
  double shell = 0.0, total = 0.0;
  std::vector<int> idx(d);
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    g->unflat(k, idx.data());
    bool near = false;
    for (int a = 0; a < d; ++a)
      if (idx[a] < 3 || idx[a] >= g->axes[a].n - 3) near = true;
    for (int c = 0; c < d; ++c) {
      const double v = std::abs(grad.at(k, c));
      total = std::max(total, v);
      if (near) shell = std::max(shell, v);
    }
  }

  Field work = phi;
  if (shell > 1e-10 * (1.0 + total)) {
    const double m = quad_mean(phi);
    for (std::int64_t k = 0; k < g->n_nodes; ++k) {
      g->unflat(k, idx.data());
      double eta = 1.0;
      for (int a = 0; a < d; ++a) {
        const Axis& ax = g->axes[a];
        const double w = 0.1 * ax.width();
        const double dist =
            std::min(ax.x[idx[a]] - ax.a(), ax.b() - ax.x[idx[a]]);
        eta *= quintic_ramp(dist / w);
      }
      work.at(k) = m + eta * (phi.at(k) - m);
    }
    grad = gradient(work, 0, d);
  }

  std::vector<Field> hess;
  hess.reserve(d * d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      Field hab = make_field(g, 1);
      if (a == b) {
        diff2_axis(work, 0, a, hab, 0);
      } else {
        diff_axis(grad, b, a, hab, 0);
      }
      hess.push_back(std::move(hab));
    }

  double s = 0.0;
  for (std::int64_t k = 0; k < g->n_nodes; ++k) {
    const double* Ak = A.row(k);
    double t = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        t += Ak[a * d + b] *
             (hess[a * d + b].at(k) + grad.at(k, a) * grad.at(k, b));
    s += g->wq[k] * t;
  }
  return -0.5 * s;
}

double divergence_quadratic(const Field& A, const Field& divA) {
  const int d = divA.nc;
  std::vector<double> v(d);
  double s = 0.0;
  for (std::int64_t k = 0; k < A.nodes(); ++k) {
    for (int i = 0; i < d; ++i) v[i] = divA.at(k, i);
    spd_solve_inplace(A.row(k), d, v.data());
    double q = 0.0;
    for (int i = 0; i < d; ++i) q += divA.at(k, i) * v[i];
    s += A.g->wq[k] * q;
  }
  return 0.125 * s;
}

void strategy_weights(const PhiSolution& sol, const double* x, double* theta) {
  const Grid& g = *sol.grad_phi.g;
  for (int a = 0; a < g.dim(); ++a)
    if (x[a] < g.axes[a].a() || x[a] > g.axes[a].b())
      throw OutOfDomain("strategy_weights: point outside the truncated box");
  interp_all(sol.grad_phi, x, theta);
}

}  // namespace rg
