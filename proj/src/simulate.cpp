#include "robustgrowth/simulate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>

#include "robustgrowth/errors.hpp"
#include "robustgrowth/fd.hpp"
#include "robustgrowth/rng.hpp"
#include "robustgrowth/threads.hpp"

namespace rg {

namespace {

void run_paths(std::int64_t n, const std::function<void(std::int64_t)>& body) {
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mu;
  parallel_for(n, [&](std::int64_t i) {
    if (failed.load(std::memory_order_relaxed)) return;
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failed.exchange(true)) first = std::current_exception();
    }
  });
  if (first) std::rethrow_exception(first);
}

// symmetric PSD square root of a row-major r x r block, written in place
void sym_sqrt_inplace(double* a, int r) {
  if (r == 1) {
    a[0] = std::sqrt(std::max(a[0], 0.0));
    return;
  }
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                            Eigen::RowMajor>;
  Eigen::Map<Mat> M(a, r, r);
  if (r <= 4) {
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    Mat root = es.eigenvectors() *
               es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
               es.eigenvectors().transpose();
    M = root;
  } else {
    Eigen::LLT<Mat> llt(M);
    Mat L = llt.matrixL();
    M = L;
  }
}

struct Dynamics {
  const MarketModel* mm = nullptr;
  const KModification* km = nullptr;  // null: undeformed asset covariance
  GridPtr g;
  Field bfield;  // d + m drift components on the full grid

  // asset-block covariance used for both diffusion and wealth accounting
  void cov_x(const double* z, double* cx) const {
    if (km)
      interp_all(km->ctilde, z, cx);
    else
      mm->c_x(z, z + mm->d, cx);
  }
  void cov_y(const double* z, double* cy) const {
    mm->c_y(z, z + mm->d, cy);
  }
};

bool inside(const GridPtr& g, const double* z) {
  for (int a = 0; a < g->dim(); ++a)
    if (z[a] < g->axes[a].a() || z[a] > g->axes[a].b()) return false;
  return true;
}

void reflect_into(const GridPtr& g, double* z) {
  for (int a = 0; a < g->dim(); ++a) {
    const double lo = g->axes[a].a(), hi = g->axes[a].b();
    double v = z[a];
    for (int guard = 0; guard < 8 && (v < lo || v > hi); ++guard) {
      if (v < lo) v = 2.0 * lo - v;
      if (v > hi) v = 2.0 * hi - v;
    }
    z[a] = std::clamp(v, lo, hi);
  }
}

SimResult run_sim(const Dynamics& dyn, const SimConfig& cfg,
                  const std::vector<Strategy>& strategies,
                  const std::vector<Observable>& observables) {
  const int d = dyn.mm->d, m = dyn.mm->m, r = d + m;
  const GridPtr& g = dyn.g;

  if (!(cfg.dt > 0.0)) throw BadConfig("simulate: dt must be positive");
  if (!(cfg.T >= cfg.dt))
    throw BadConfig("simulate: horizon shorter than one step");
  if (cfg.n_paths < 1) throw BadConfig("simulate: need at least one path");
  if (cfg.hist_bins < 1) throw BadConfig("simulate: need at least one bin");
  if (cfg.boundary_policy != "reflect" &&
      cfg.boundary_policy != "reject-and-halve")
    throw BadConfig("simulate: unknown boundary policy \"" +
                    cfg.boundary_policy + "\"");
  if (!cfg.initial.empty() && static_cast<int>(cfg.initial.size()) != r)
    throw BadConfig("simulate: initial state dimension mismatch");

  std::vector<double> z0(r);
  if (cfg.initial.empty()) {
    for (int a = 0; a < r; ++a)
      z0[a] = 0.5 * (g->axes[a].a() + g->axes[a].b());
  } else {
    z0 = cfg.initial;
    if (!inside(g, z0.data()))
      throw OutOfDomain("simulate: initial state off the truncated box");
  }

  const std::int64_t n_steps = std::llround(cfg.T / cfg.dt);
  const double dt = cfg.dt, T = static_cast<double>(n_steps) * dt;
  const bool halve = cfg.boundary_policy == "reject-and-halve";
  const std::int64_t P = cfg.n_paths;
  const std::size_t ns = strategies.size(), no = observables.size();

  SimResult out;
  out.T = T;
  out.dt = dt;
  out.n_steps = n_steps;
  if (n_steps < 100)
    out.warning = "horizon under 100 steps; ergodic averages are unreliable";
  out.strategies.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    out.strategies[s].name = strategies[s].name;
    out.strategies[s].log_v.assign(P, 0.0);
    out.strategies[s].qv.assign(P, 0.0);
  }
  for (const auto& o : observables) out.observable_names.push_back(o.name);
  out.time_averages.assign(no, std::vector<double>(P, 0.0));
  out.histograms.assign(r, std::vector<std::int64_t>(cfg.hist_bins, 0));
  if (cfg.thin > 0) out.thinned.assign(P, {});

  std::vector<std::vector<std::vector<std::int64_t>>> hist_local(
      P, std::vector<std::vector<std::int64_t>>(
             r, std::vector<std::int64_t>(cfg.hist_bins, 0)));
  std::vector<std::int64_t> rejected(P, 0), attempts(P, 0);

  run_paths(P, [&](std::int64_t path) {
    NormalRng rng(path_seed(cfg.seed, path));
    std::vector<double> z(z0), zprev(r), znew(r), b(r), xi(r);
    std::vector<double> cx(d * d), cy(m * m), rx(d * d), ry(m * m);
    std::vector<double> theta(ns * d);
    std::vector<double> obs_acc(no, 0.0);
    std::vector<double> logv(ns, 0.0), qv(ns, 0.0);

    if (cfg.thin > 0) {
      auto& rec = out.thinned[path];
      rec.reserve((n_steps / cfg.thin + 2) * r);
      rec.insert(rec.end(), z.begin(), z.end());
    }

    for (std::int64_t step = 0; step < n_steps; ++step) {
      for (int a = 0; a < r; ++a) {
        const double lo = g->axes[a].a(), hi = g->axes[a].b();
        int bin = static_cast<int>((z[a] - lo) / (hi - lo) * cfg.hist_bins);
        bin = std::clamp(bin, 0, cfg.hist_bins - 1);
        ++hist_local[path][a][bin];
      }
      for (std::size_t o = 0; o < no; ++o)
        obs_acc[o] += observables[o].eval(z.data(), z.data() + d);

      dyn.cov_x(z.data(), cx.data());
      dyn.cov_y(z.data(), cy.data());
      for (std::size_t s = 0; s < ns; ++s) {
        strategies[s].eval(z.data(), z.data() + d, theta.data() + s * d);
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
          double v = 0.0;
          for (int j = 0; j < d; ++j)
            v += cx[i * d + j] * theta[s * d + j];
          q += theta[s * d + i] * v;
        }
        qv[s] += q * dt;
        logv[s] -= 0.5 * q * dt;
      }

      interp_all(dyn.bfield, z.data(), b.data());
      zprev = z;
      rx = cx;
      ry = cy;
      sym_sqrt_inplace(rx.data(), d);
      sym_sqrt_inplace(ry.data(), m);

      double remaining = dt;
      double sub = dt;
      int depth = 0;
      while (remaining > 0.0) {
        ++attempts[path];
        for (int a = 0; a < r; ++a) xi[a] = rng.normal();
        const double sq = std::sqrt(sub);
        for (int i = 0; i < d; ++i) {
          double nz = 0.0;
          for (int j = 0; j < d; ++j) nz += rx[i * d + j] * xi[j];
          znew[i] = z[i] + b[i] * sub + sq * nz;
        }
        for (int i = 0; i < m; ++i) {
          double nz = 0.0;
          for (int j = 0; j < m; ++j) nz += ry[i * m + j] * xi[d + j];
          znew[d + i] = z[d + i] + b[d + i] * sub + sq * nz;
        }
        if (inside(g, znew.data())) {
          for (int a = 0; a < r; ++a) z[a] = znew[a];
          remaining -= sub;
          sub = std::min(sub, remaining);
        } else if (!halve) {
          reflect_into(g, znew.data());
          for (int a = 0; a < r; ++a) z[a] = znew[a];
          remaining -= sub;
          sub = std::min(sub, remaining);
        } else {
          ++rejected[path];
          sub *= 0.5;
          if (++depth > 30) {
            for (int a = 0; a < r; ++a)
              znew[a] = std::clamp(znew[a], g->axes[a].a(), g->axes[a].b());
            for (int a = 0; a < r; ++a) z[a] = znew[a];
            break;
          }
        }
      }

      // realized asset increment settles the wealth update; the covariance
      // term was charged above at the pre-step state
      for (std::size_t s = 0; s < ns; ++s) {
        double gain = 0.0;
        for (int i = 0; i < d; ++i)
          gain += theta[s * d + i] * (z[i] - zprev[i]);
        logv[s] += gain;
      }

      if (cfg.thin > 0 && (step + 1) % cfg.thin == 0) {
        auto& rec = out.thinned[path];
        rec.insert(rec.end(), z.begin(), z.end());
      }
    }

    for (std::size_t s = 0; s < ns; ++s) {
      out.strategies[s].log_v[path] = logv[s];
      out.strategies[s].qv[path] = qv[s];
    }
    for (std::size_t o = 0; o < no; ++o)
      out.time_averages[o][path] =
          obs_acc[o] / static_cast<double>(n_steps);
  });

  for (std::int64_t path = 0; path < P; ++path)
    for (int a = 0; a < r; ++a)
      for (int bb = 0; bb < cfg.hist_bins; ++bb)
        out.histograms[a][bb] += hist_local[path][a][bb];

  std::int64_t rej = 0, att = 0;
  for (std::int64_t path = 0; path < P; ++path) {
    rej += rejected[path];
    att += attempts[path];
  }
  out.reject_fraction =
      att > 0 ? static_cast<double>(rej) / static_cast<double>(att) : 0.0;
  if (halve && out.reject_fraction > 0.5)
    throw StepRejectionOverflow(
        "simulate: more than half of all step attempts were rejected");

  for (std::size_t s = 0; s < ns; ++s) {
    auto& st = out.strategies[s];
    double mean = 0.0;
    for (double v : st.log_v) mean += v / T;
    mean /= static_cast<double>(P);
    st.g_hat = mean;
    double var = 0.0;
    for (double v : st.log_v) {
      const double dev = v / T - mean;
      var += dev * dev;
    }
    st.se = P > 1 ? std::sqrt(var / (static_cast<double>(P) *
                                     static_cast<double>(P - 1)))
                  : 0.0;
  }
  return out;
}

}  // namespace

std::vector<double> histogram_density(const SimResult& res, int coordinate) {
  const auto& h = res.histograms.at(coordinate);
  std::int64_t total = 0;
  for (std::int64_t c : h) total += c;
  std::vector<double> p(h.size(), 0.0);
  for (std::size_t i = 0; i < h.size(); ++i)
    p[i] = static_cast<double>(h[i]) / static_cast<double>(total);
  return p;
}

double histogram_tv(const SimResult& res, int coordinate, const Field& density,
                    int component) {
  const Axis& ax = density.g->axes[0];
  const int bins = static_cast<int>(res.histograms.at(coordinate).size());
  std::vector<double> ref(bins, 0.0);
  const int sub = 32;
  for (int i = 0; i < bins; ++i) {
    const double lo = ax.a() + ax.width() * i / bins;
    const double w = ax.width() / bins;
    double acc = 0.0;
    for (int k = 0; k < sub; ++k) {
      const double x = lo + w * (k + 0.5) / sub;
      acc += interp(density, component, &x);
    }
    ref[i] = acc * w / sub;
  }
  double mass = 0.0;
  for (double v : ref) mass += v;
  std::vector<double> emp = histogram_density(res, coordinate);
  double tv = 0.0;
  for (int i = 0; i < bins; ++i) tv += std::abs(emp[i] - ref[i] / mass);
  return 0.5 * tv;
}

SimResult simulate_reference(const MarketModel& mm, const DriftFields& df,
                             const SimConfig& cfg,
                             const std::vector<Strategy>& strategies,
                             const std::vector<Observable>& observables) {
  const int d = mm.d, m = mm.m, r = d + m;
  Dynamics dyn;
  dyn.mm = &mm;
  dyn.km = nullptr;
  dyn.g = df.ell_x.g;
  dyn.bfield = make_field(dyn.g, r);
  std::vector<double> z(r), cx(d * d), cy(m * m);
  for (std::int64_t k = 0; k < dyn.g->n_nodes; ++k) {
    dyn.g->coords(k, z.data());
    mm.c_x(z.data(), z.data() + d, cx.data());
    mm.c_y(z.data(), z.data() + d, cy.data());
    for (int i = 0; i < d; ++i) {
      double v = 0.0;
      for (int j = 0; j < d; ++j) v += cx[i * d + j] * df.ell_x.at(k, j);
      dyn.bfield.at(k, i) = v;
    }
    for (int i = 0; i < m; ++i) {
      double v = 0.0;
      for (int j = 0; j < m; ++j) v += cy[i * m + j] * df.ell_y.at(k, j);
      dyn.bfield.at(k, d + i) = v;
    }
  }
  return run_sim(dyn, cfg, strategies, observables);
}

SimResult simulate_worst_case(const MarketModel& mm, const KModification& km,
                              const PhiSolution& sol, const VSolution& vs,
                              const SimConfig& cfg,
                              const std::vector<Strategy>& strategies,
                              const std::vector<Observable>& observables) {
  const int d = mm.d, m = mm.m, r = d + m;
  Dynamics dyn;
  dyn.mm = &mm;
  dyn.km = &km;
  dyn.g = km.p.g;
  auto gd = exo_grid(dyn.g);
  const std::int64_t nd = gd->n_nodes;
  dyn.bfield = make_field(dyn.g, r);
  std::vector<double> z(r), cy(m * m);
  for (std::int64_t k = 0; k < dyn.g->n_nodes; ++k) {
    const std::int64_t e = k / nd;
    dyn.g->coords(k, z.data());
    for (int i = 0; i < d; ++i) {
      double v = 0.0;
      for (int j = 0; j < d; ++j)
        v += km.ctilde.at(k, i * d + j) * sol.grad_phi.at(e, j);
      dyn.bfield.at(k, i) = v;
    }
    mm.c_y(z.data(), z.data() + d, cy.data());
    const double p = km.p.at(k);
    for (int i = 0; i < m; ++i) {
      double v = vs.flux.at(k, i) / p;
      for (int j = 0; j < m; ++j) v += cy[i * m + j] * vs.xi.at(k, j);
      dyn.bfield.at(k, d + i) = v;
    }
  }
  return run_sim(dyn, cfg, strategies, observables);
}

std::vector<double> wealth_path(const MarketModel& mm,
                                const std::vector<double>& path, double dt,
                                const Strategy& strategy,
                                const KModification* kmod) {
  const int d = mm.d, m = mm.m, r = d + m;
  if (path.size() % r != 0 || path.size() < 2 * static_cast<std::size_t>(r))
    throw BadConfig("wealth_path: need at least two recorded states");
  const std::int64_t n = static_cast<std::int64_t>(path.size()) / r - 1;
  std::vector<double> logv(n + 1, 0.0);
  std::vector<double> theta(d), cx(d * d), ct(d * d);
  for (std::int64_t k = 0; k < n; ++k) {
    const double* z = path.data() + k * r;
    const double* znext = path.data() + (k + 1) * r;
    strategy.eval(z, z + d, theta.data());
    mm.c_x(z, z + d, cx.data());
    if (kmod) {
      interp_all(kmod->ctilde, z, ct.data());
      cx = ct;
    }
    double gain = 0.0, q = 0.0;
    for (int i = 0; i < d; ++i) {
      gain += theta[i] * (znext[i] - z[i]);
      for (int j = 0; j < d; ++j) q += theta[i] * cx[i * d + j] * theta[j];
    }
    logv[k + 1] = logv[k] + gain - 0.5 * q * dt;
  }
  return logv;
}

double master_formula_gap(const MarketModel& mm,
                          const std::vector<double>& path, double dt,
                          const PhiSolution& sol, const KModification* kmod) {
  const int d = mm.d, m = mm.m, r = d + m;
  if (path.size() % r != 0 || path.size() < 2 * static_cast<std::size_t>(r))
    throw BadConfig("master_formula_gap: need at least two recorded states");
  const std::int64_t n = static_cast<std::int64_t>(path.size()) / r - 1;

  Strategy opt{"optimal", [&sol, d](const double* x, const double*,
                                    double* th) {
                 for (int j = 0; j < d; ++j) th[j] = interp(sol.grad_phi, j, x);
               }};
  std::vector<double> direct = wealth_path(mm, path, dt, opt, kmod);

  // nodal second derivatives of the potential, interpolated along the path
  Field hess = make_field(sol.grad_phi.g, d * d);
  for (int i = 0; i < d; ++i)
    for (int a = 0; a < d; ++a)
      diff_axis(sol.grad_phi, i, a, hess, i * d + a);

  std::vector<double> theta(d), cx(d * d), ct(d * d), hh(d * d);
  double integral = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double* z = path.data() + k * r;
    const double* znext = path.data() + (k + 1) * r;
    mm.c_x(z, z + d, cx.data());
    if (kmod) {
      interp_all(kmod->ctilde, z, ct.data());
      cx = ct;
    }
    for (int j = 0; j < d; ++j) theta[j] = interp(sol.grad_phi, j, z);
    interp_all(hess, z, hh.data());
    // the Hessian term is charged against realized increments (the discrete
    // quadratic variation), which keeps the pathwise mismatch first order
    double tr = 0.0, q = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        tr += hh[i * d + j] * (znext[i] - z[i]) * (znext[j] - z[j]);
        q += theta[i] * cx[i * d + j] * theta[j];
      }
    integral += 0.5 * tr + 0.5 * q * dt;
  }
  const double* z0 = path.data();
  const double* zT = path.data() + n * r;
  const double master =
      interp(sol.phi, 0, zT) - interp(sol.phi, 0, z0) - integral;
  return std::abs(direct[n] - master);
}

GrowthTable estimate_growth(const std::vector<const SimResult*>& results,
                            double lambda) {
  GrowthTable table;
  for (const SimResult* res : results) {
    for (const auto& st : res->strategies) {
      if (static_cast<int>(st.log_v.size()) < 16)
        throw BadConfig("estimate_growth: need at least 16 paths");
      GrowthRow row;
      row.name = st.name;
      row.g_hat = st.g_hat;
      row.se = st.se;
      row.n_paths = static_cast<int>(st.log_v.size());
      row.gap_to_lambda = std::abs(st.g_hat - lambda);
      row.within_tolerance =
          row.gap_to_lambda <=
          std::max(3.0 * st.se, 0.05 * std::abs(lambda));
      table.rows.push_back(row);
    }
  }
  return table;
}

}  // namespace rg
