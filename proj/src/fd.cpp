#include "robustgrowth/fd.hpp"

#include <cmath>

namespace rg {

namespace {

// Iterate 1-D lines along `axis`; node j of a line is base + j*stride.
template <class F>
void for_each_line(const Grid& g, int axis, F&& body) {
  const std::int64_t s = g.strides[axis];
  const int n = g.axes[axis].n;
  const std::int64_t n_lines = g.n_nodes / n;
  for (std::int64_t line = 0; line < n_lines; ++line) {
    const std::int64_t base = (line / s) * s * n + (line % s);
    body(base, s, n);
  }
}

void d1_strided(const Grid& g, int axis, const double* u, std::int64_t us,
                double* out, std::int64_t os) {
  const double c = 1.0 / (2.0 * g.axes[axis].h);
  for_each_line(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
    auto U = [&](int j) { return u[(base + j * s) * us]; };
    out[base * os] = c * (-3.0 * U(0) + 4.0 * U(1) - U(2));
    for (int j = 1; j < n - 1; ++j)
      out[(base + j * s) * os] = c * (U(j + 1) - U(j - 1));
    out[(base + (n - 1) * s) * os] =
        c * (3.0 * U(n - 1) - 4.0 * U(n - 2) + U(n - 3));
  });
}

void d1_adjoint_add_strided(const Grid& g, int axis, const double* v,
                            std::int64_t vs, double* out, std::int64_t os) {
  const double c = 1.0 / (2.0 * g.axes[axis].h);
  for_each_line(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
    auto V = [&](int j) { return v[(base + j * s) * vs]; };
    auto O = [&](int j) -> double& { return out[(base + j * s) * os]; };
    O(0) += -3.0 * c * V(0);
    O(1) += 4.0 * c * V(0);
    O(2) += -c * V(0);
    for (int j = 1; j < n - 1; ++j) {
      O(j + 1) += c * V(j);
      O(j - 1) -= c * V(j);
    }
    O(n - 1) += 3.0 * c * V(n - 1);
    O(n - 2) += -4.0 * c * V(n - 1);
    O(n - 3) += c * V(n - 1);
  });
}

void d2_strided(const Grid& g, int axis, const double* u, std::int64_t us,
                double* out, std::int64_t os) {
  const double h = g.axes[axis].h;
  const double c = 1.0 / (h * h);
  for_each_line(g, axis, [&](std::int64_t base, std::int64_t s, int n) {
    auto U = [&](int j) { return u[(base + j * s) * us]; };
    for (int j = 1; j < n - 1; ++j)
      out[(base + j * s) * os] = c * (U(j + 1) - 2.0 * U(j) + U(j - 1));
    if (n >= 4) {
      out[base * os] = c * (2.0 * U(0) - 5.0 * U(1) + 4.0 * U(2) - U(3));
      out[(base + (n - 1) * s) * os] =
          c * (2.0 * U(n - 1) - 5.0 * U(n - 2) + 4.0 * U(n - 3) - U(n - 4));
    } else {
      out[base * os] = c * (U(0) - 2.0 * U(1) + U(2));
      out[(base + (n - 1) * s) * os] = out[base * os];
    }
  });
}

double vec_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void demean(std::vector<double>& v) {
  const double m = vec_mean(v);
  for (double& x : v) x -= m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void diff_axis(const Field& u, int uc, int axis, Field& out, int oc) {
  d1_strided(*u.g, axis, u.a.data() + uc, u.nc, out.a.data() + oc, out.nc);
}

Field diff_axis(const Field& u, int uc, int axis) {
  Field out = make_field(u.g, 1);
  diff_axis(u, uc, axis, out, 0);
  return out;
}

void diff_axis_adjoint_add(const Field& v, int vc, int axis, Field& out,
                           int oc) {
  d1_adjoint_add_strided(*v.g, axis, v.a.data() + vc, v.nc,
                         out.a.data() + oc, out.nc);
}

Field gradient(const Field& u, int first_axis, int count) {
  Field out = make_field(u.g, count);
  for (int j = 0; j < count; ++j) diff_axis(u, 0, first_axis + j, out, j);
  return out;
}

Field gradient(const Field& u) { return gradient(u, 0, u.g->dim()); }

void diff2_axis(const Field& u, int uc, int axis, Field& out, int oc) {
  d2_strided(*u.g, axis, u.a.data() + uc, u.nc, out.a.data() + oc, out.nc);
}

void DivFormOperator::apply(const std::vector<double>& u,
                            std::vector<double>& out) const {
  const std::int64_t N = g->n_nodes;
  std::vector<double> grad(static_cast<std::size_t>(r) * N);
  std::vector<double> flux(static_cast<std::size_t>(r) * N);
  for (int a = 0; a < r; ++a)
    d1_strided(*g, a, u.data(), 1, grad.data() + a * N, 1);
  for (std::int64_t k = 0; k < N; ++k) {
    const double w = g->wq[k];
    const double* Ak = A->row(k);
    for (int a = 0; a < r; ++a) {
      double s = 0.0;
      for (int b = 0; b < r; ++b) s += Ak[a * r + b] * grad[b * N + k];
      flux[a * N + k] = w * s;
    }
  }
  out.assign(static_cast<std::size_t>(N), 0.0);
  for (int a = 0; a < r; ++a)
    d1_adjoint_add_strided(*g, a, flux.data() + a * N, 1, out.data(), 1);
}

std::vector<double> DivFormOperator::rhs(const Field& gamma) const {
  const std::int64_t N = g->n_nodes;
  std::vector<double> flux(static_cast<std::size_t>(N));
  std::vector<double> out(static_cast<std::size_t>(N), 0.0);
  for (int a = 0; a < r; ++a) {
    for (std::int64_t k = 0; k < N; ++k) {
      const double w = g->wq[k];
      const double* Ak = A->row(k);
      double s = 0.0;
      for (int b = 0; b < r; ++b) s += Ak[a * r + b] * gamma.at(k, b);
      flux[k] = w * s;
    }
    d1_adjoint_add_strided(*g, a, flux.data(), 1, out.data(), 1);
  }
  return out;
}

CgResult cg_zero_mean(const DivFormOperator& op, const std::vector<double>& b,
                      std::vector<double>& x, double tol, std::int64_t maxit) {
  const std::int64_t N = op.g->n_nodes;
  if (maxit <= 0) maxit = 10 * N;
  x.assign(static_cast<std::size_t>(N), 0.0);

  std::vector<double> r = b;
  demean(r);
  const double bnorm = std::sqrt(dot(r, r));
  CgResult res;
  res.rhs_norm = bnorm;
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  std::vector<double> p = r, Ap(r.size());
  double rs = dot(r, r);
  for (std::int64_t it = 0; it < maxit; ++it) {
    op.apply(p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) throw SingularSystem("cg: operator not positive on subspace");
    const double alpha = rs / pAp;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    demean(r);
    const double rs_new = dot(r, r);
    res.iterations = it + 1;
    if (std::sqrt(rs_new) <= tol * bnorm) {
      demean(x);
      res.residual = std::sqrt(rs_new);
      res.converged = true;
      return res;
    }
    const double beta = rs_new / rs;
    rs = rs_new;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
  }
  throw NoConvergence("cg: iteration limit reached");
}

}  // namespace rg
