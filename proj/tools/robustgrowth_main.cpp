#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "robustgrowth/assumptions.hpp"
#include "robustgrowth/averaging.hpp"
#include "robustgrowth/errors.hpp"
#include "robustgrowth/examples.hpp"
#include "robustgrowth/field.hpp"
#include "robustgrowth/grid.hpp"
#include "robustgrowth/growth.hpp"
#include "robustgrowth/model.hpp"
#include "robustgrowth/simulate.hpp"
#include "robustgrowth/worstcase.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kRuntimeError = 3;
constexpr int kCheckFailure = 4;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON serialization with 17 significant digits on every float so that
// repeated runs diff byte for byte.
void dump17(const json& j, std::string& s, int indent) {
  const std::string pad(2 * indent, ' ');
  const std::string pad1(2 * (indent + 1), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        s += "{}";
        return;
      }
      s += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) s += ",\n";
        first = false;
        s += pad1 + json(it.key()).dump() + ": ";
        dump17(it.value(), s, indent + 1);
      }
      s += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        s += "[]";
        return;
      }
      s += "[\n";
      bool first = true;
      for (const auto& v : j) {
        if (!first) s += ",\n";
        first = false;
        s += pad1;
        dump17(v, s, indent + 1);
      }
      s += "\n" + pad + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      s += std::isfinite(v) ? fmt17(v) : "null";
      return;
    }
    default:
      s += j.dump();
      return;
  }
}

std::string json_text(const json& j) {
  std::string s;
  dump17(j, s, 0);
  s += "\n";
  return s;
}

void atomic_write(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw rg::BadConfig("cannot open output file " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw rg::BadConfig("cannot write output file " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string hash_bytes(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a:%016" PRIx64, h);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw rg::BadConfig("cannot read file " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// model documents

rg::MarketModel exogenous_uniform_model() {
  rg::MarketModel mm;
  mm.name = "exogenous-uniform";
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
  mm.density = [](const double*, const double* y) {
    return 6.0 * y[0] * (1.0 - y[0]);
  };
  auto hooks = std::make_shared<rg::AnalyticHooks>();
  hooks->ell_x = [](const double*, const double*, double* out) { out[0] = 0.0; };
  hooks->ell_y = [](const double*, const double* y, double* out) {
    out[0] = (1.0 - 2.0 * y[0]) / (y[0] * (1.0 - y[0]));
  };
  hooks->cxp = [](const double*, const double* y, double* out) {
    out[0] = (1.0 + y[0] * y[0]) * 6.0 * y[0] * (1.0 - y[0]);
  };
  hooks->cxp_dx = [](const double*, const double*, int, double* out) {
    out[0] = 0.0;
  };
  hooks->cxp_d2 = [](const double*, const double*, int, int, double* out) {
    out[0] = 0.0;
  };
  hooks->marginal_x = [](const double*) { return 1.0; };
  mm.analytic = hooks;
  auto oracle = std::make_shared<rg::ClosedFormOracle>();
  oracle->phi = [](const double*) { return 0.0; };
  oracle->theta = [](const double*, double* out) { out[0] = 0.0; };
  oracle->lambda = 0.0;
  oracle->lambda_of_eps = [](double) { return 0.0; };
  oracle->note = "uniform asset marginal: flat averaged covariance, zero rate";
  mm.oracle = oracle;
  return mm;
}

struct LoadedTable {
  int d = 0, m = 0;
  rg::GridPtr g;
  std::shared_ptr<rg::Field> f;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ' && c != '\t') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

LoadedTable load_table(const fs::path& file) {
  std::ifstream f(file);
  if (!f) throw rg::BadConfig("cannot read table " + file.string());
  std::string line;
  if (!std::getline(f, line))
    throw rg::BadConfig("empty table " + file.string());
  const auto names = split_csv_line(line);
  LoadedTable t;
  std::size_t pos = 0;
  while (pos < names.size() && names[pos] == "x" + std::to_string(pos + 1))
    ++pos;
  t.d = static_cast<int>(pos);
  std::size_t ypos = 0;
  while (pos + ypos < names.size() &&
         names[pos + ypos] == "y" + std::to_string(ypos + 1))
    ++ypos;
  t.m = static_cast<int>(ypos);
  if (t.d + t.m == 0 || pos + ypos + 1 != names.size() ||
      names.back() != "value")
    throw rg::BadConfig("table " + file.string() +
                        " needs header x1,...,y1,...,value");
  const int dim = t.d + t.m;
  if (dim > 8) throw rg::BadConfig("table dimension above 8 unsupported");

  std::vector<std::array<double, 9>> rows;
  std::int64_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != dim + 1)
      throw rg::BadConfig("table " + file.string() + " line " +
                          std::to_string(lineno) + ": wrong column count");
    std::array<double, 9> row{};
    for (int c = 0; c <= dim; ++c) {
      char* end = nullptr;
      row[c] = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0')
        throw rg::BadConfig("table " + file.string() + " line " +
                            std::to_string(lineno) + ": bad number '" +
                            cells[c] + "'");
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw rg::BadConfig("table " + file.string() + " has no rows");

  std::vector<rg::Axis> axes;
  std::vector<double> origin(dim), step(dim);
  std::int64_t expect = 1;
  for (int c = 0; c < dim; ++c) {
    std::vector<double> vals;
    vals.reserve(rows.size());
    for (const auto& r : rows) vals.push_back(r[c]);
    std::sort(vals.begin(), vals.end());
    std::vector<double> uniq;
    for (double v : vals)
      if (uniq.empty() || v - uniq.back() > 1e-12 * (1.0 + std::abs(v)))
        uniq.push_back(v);
    const int n = static_cast<int>(uniq.size());
    if (n < 2)
      throw rg::BadConfig("table " + file.string() + ": axis " +
                          std::to_string(c + 1) + " needs at least two nodes");
    const double h = (uniq.back() - uniq.front()) / (n - 1);
    for (int i = 0; i < n; ++i)
      if (std::abs(uniq[i] - (uniq.front() + i * h)) > 1e-6 * h)
        throw rg::BadConfig("table " + file.string() + ": axis " +
                            std::to_string(c + 1) + " is not uniform");
    origin[c] = uniq.front();
    step[c] = h;
    axes.push_back(rg::make_axis(uniq.front(), uniq.back(), 0.0, n));
    expect *= n;
  }
  if (static_cast<std::int64_t>(rows.size()) != expect)
    throw rg::BadConfig("table " + file.string() +
                        " does not cover a full tensor grid");

  t.g = rg::make_grid(axes, t.d);
  t.f = std::make_shared<rg::Field>(rg::make_field(t.g, 1));
  std::vector<char> seen(static_cast<std::size_t>(expect), 0);
  std::vector<int> idx(dim);
  for (const auto& r : rows) {
    for (int c = 0; c < dim; ++c)
      idx[c] = static_cast<int>(std::llround((r[c] - origin[c]) / step[c]));
    const std::int64_t k = t.g->flat(idx.data());
    if (seen[static_cast<std::size_t>(k)])
      throw rg::BadConfig("table " + file.string() + " repeats a node");
    seen[static_cast<std::size_t>(k)] = 1;
    t.f->at(k) = r[dim];
  }
  return t;
}

rg::Box box_from_json(const json& j, const char* lo_key, const char* hi_key) {
  rg::Box b;
  b.lo = j.at(lo_key).get<std::vector<double>>();
  b.hi = j.at(hi_key).get<std::vector<double>>();
  if (b.lo.size() != b.hi.size())
    throw rg::BadConfig("domain box sides disagree in length");
  return b;
}

rg::MarketModel tabulated_model(const json& params, const json& domain,
                                const fs::path& base,
                                std::vector<int>& default_grid) {
  if (!params.contains("c_x") || !params.contains("c_y") ||
      !params.contains("density"))
    throw rg::BadConfig("tabulated params need c_x, c_y, and density tables");
  const auto resolve = [&](const std::string& rel) {
    fs::path p(rel);
    return p.is_absolute() ? p : base / p;
  };

  auto density = std::make_shared<LoadedTable>(
      load_table(resolve(params.at("density").get<std::string>())));
  const int d = density->d, m = density->m;
  if (d < 1 || m < 1)
    throw rg::BadConfig("density table must carry both x and y axes");

  auto cx = std::make_shared<std::vector<LoadedTable>>();
  const auto& jx = params.at("c_x");
  if (static_cast<int>(jx.size()) != d)
    throw rg::BadConfig("c_x table array must be d x d");
  for (int i = 0; i < d; ++i) {
    if (static_cast<int>(jx.at(i).size()) != d)
      throw rg::BadConfig("c_x table array must be d x d");
    for (int jj = 0; jj < d; ++jj) {
      cx->push_back(load_table(resolve(jx.at(i).at(jj).get<std::string>())));
      if (cx->back().d != d || cx->back().m != m)
        throw rg::BadConfig("c_x table axes disagree with the density table");
    }
  }
  auto cy = std::make_shared<std::vector<LoadedTable>>();
  const auto& jy = params.at("c_y");
  if (static_cast<int>(jy.size()) != m)
    throw rg::BadConfig("c_y table array must be m x m");
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(jy.at(i).size()) != m)
      throw rg::BadConfig("c_y table array must be m x m");
    for (int jj = 0; jj < m; ++jj) {
      cy->push_back(load_table(resolve(jy.at(i).at(jj).get<std::string>())));
      if (cy->back().d != d || cy->back().m != m)
        throw rg::BadConfig("c_y table axes disagree with the density table");
    }
  }

  rg::MarketModel mm;
  mm.name = "tabulated";
  mm.d = d;
  mm.m = m;
  if (domain.is_object() && domain.contains("e_lo")) {
    mm.ebox = box_from_json(domain, "e_lo", "e_hi");
    mm.dbox = box_from_json(domain, "d_lo", "d_hi");
    if (mm.ebox.dim() != d || mm.dbox.dim() != m)
      throw rg::BadConfig("domain boxes disagree with the table axes");
  } else {
    for (int a = 0; a < d; ++a) {
      mm.ebox.lo.push_back(density->g->axes[a].lo);
      mm.ebox.hi.push_back(density->g->axes[a].hi);
    }
    for (int a = 0; a < m; ++a) {
      mm.dbox.lo.push_back(density->g->axes[d + a].lo);
      mm.dbox.hi.push_back(density->g->axes[d + a].hi);
    }
  }

  const int dim = d + m;
  mm.c_x = [cx, d, m, dim](const double* x, const double* y, double* out) {
    std::array<double, 8> z{};
    for (int a = 0; a < d; ++a) z[a] = x[a];
    for (int a = 0; a < m; ++a) z[d + a] = y[a];
    (void)dim;
    for (int e = 0; e < d * d; ++e)
      out[e] = rg::interp(*(*cx)[e].f, 0, z.data());
  };
  mm.c_y = [cy, d, m](const double* x, const double* y, double* out) {
    std::array<double, 8> z{};
    for (int a = 0; a < d; ++a) z[a] = x[a];
    for (int a = 0; a < m; ++a) z[d + a] = y[a];
    for (int e = 0; e < m * m; ++e)
      out[e] = rg::interp(*(*cy)[e].f, 0, z.data());
  };
  mm.density = [density, d, m](const double* x, const double* y) {
    std::array<double, 8> z{};
    for (int a = 0; a < d; ++a) z[a] = x[a];
    for (int a = 0; a < m; ++a) z[d + a] = y[a];
    return rg::interp(*density->f, 0, z.data());
  };

  default_grid.clear();
  for (int a = 0; a < dim; ++a) default_grid.push_back(density->g->axes[a].n);
  return mm;
}

struct ResolvedModel {
  rg::MarketModel mm;
  std::vector<int> grid_n;
  std::vector<int> ref_grid;
  double eps = 1e-3;
  rg::Box kbox, vbox;
  std::string source;
  std::string source_hash;
};

void default_class_boxes(ResolvedModel& rm) {
  rm.kbox = {};
  rm.vbox = {};
  for (int a = 0; a < rm.mm.d; ++a) {
    const double lo = rm.mm.ebox.lo[a], w = rm.mm.ebox.hi[a] - lo;
    rm.kbox.lo.push_back(lo + 0.2 * w);
    rm.kbox.hi.push_back(lo + 0.8 * w);
    rm.vbox.lo.push_back(lo + 0.1 * w);
    rm.vbox.hi.push_back(lo + 0.9 * w);
  }
}

ResolvedModel load_model_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw rg::BadConfig(std::string("malformed model document: ") + e.what());
  }
  try {
    ResolvedModel rm;
    rm.source = path.string();
    rm.source_hash = hash_bytes(bytes);
    const std::string family = doc.at("family").get<std::string>();
    const json params = doc.value("params", json::object());
    const json domain = doc.value("domain", json::object());

    if (family == "beta") {
      rg::BetaParams bp;
      for (const auto& [key, val] : params.items()) {
        double* slot = nullptr;
        if (key == "sigma") slot = &bp.sigma;
        else if (key == "a1") slot = &bp.a1;
        else if (key == "a2") slot = &bp.a2;
        else if (key == "b1") slot = &bp.b1;
        else if (key == "b2") slot = &bp.b2;
        else if (key == "q1") slot = &bp.q1;
        else if (key == "q2") slot = &bp.q2;
        else if (key == "alpha1") slot = &bp.alpha1;
        else if (key == "alpha2") slot = &bp.alpha2;
        else if (key == "beta1") slot = &bp.beta1;
        else if (key == "beta2") slot = &bp.beta2;
        else throw rg::BadConfig("unknown beta parameter '" + key + "'");
        *slot = val.get<double>();
      }
      const auto bad = rg::check_beta_params(bp);
      if (!bad.empty()) {
        std::string msg = "parameter constraints violated:";
        for (const auto& b : bad) msg += " " + b;
        throw rg::BadConfig(msg);
      }
      rm.mm = rg::beta_model(bp);
      rm.ref_grid = {401, 401};
    } else if (family == "exogenous") {
      const std::string px = params.value("px", "beta");
      if (px == "uniform")
        rm.mm = exogenous_uniform_model();
      else if (px == "beta")
        rm.mm = rg::exogenous_model();
      else
        throw rg::BadConfig("unknown exogenous marginal '" + px + "'");
      rm.ref_grid = {401, 401};
    } else if (family == "tractable") {
      rm.mm = rg::tractable_model();
      rm.ref_grid = {301, 301, 301};
    } else if (family == "tabulated") {
      rm.mm = tabulated_model(params, domain, path.parent_path(), rm.ref_grid);
    } else {
      throw rg::BadConfig("unknown model family '" + family + "'");
    }

    if (family != "tabulated" && domain.is_object() && !domain.empty())
      throw rg::BadConfig("domain is fixed for family '" + family + "'");

    rm.grid_n = rm.ref_grid;
    if (doc.contains("grid")) {
      const json& gj = doc.at("grid");
      if (gj.contains("n")) {
        if (gj.at("n").is_array())
          rm.grid_n = gj.at("n").get<std::vector<int>>();
        else
          rm.grid_n = {gj.at("n").get<int>()};
      }
      rm.eps = gj.value("eps", rm.eps);
    }
    default_class_boxes(rm);
    return rm;
  } catch (const json::exception& e) {
    throw rg::BadConfig(std::string("bad model document: ") + e.what());
  }
}

ResolvedModel resolve_model(const std::string& example,
                            const std::string& model_path,
                            const std::vector<int>& cli_grid, double cli_eps) {
  if (example.empty() == model_path.empty())
    throw rg::BadConfig("give exactly one of --example and --model");
  ResolvedModel rm;
  if (!example.empty()) {
    const rg::CatalogEntry* e = rg::find_example(example);
    if (!e) throw rg::BadConfig("unknown example '" + example + "'");
    rm.mm = e->build();
    rm.grid_n = e->grid;
    rm.ref_grid = e->grid;
    rm.eps = e->eps;
    rm.kbox = {e->k_lo, e->k_hi};
    rm.vbox = {e->v_lo, e->v_hi};
    rm.source = "example:" + example;
  } else {
    rm = load_model_file(model_path);
  }
  if (!cli_grid.empty()) rm.grid_n = cli_grid;
  if (cli_eps > 0.0) rm.eps = cli_eps;
  const int dim = rm.mm.d + rm.mm.m;
  if (static_cast<int>(rm.grid_n.size()) == 1)
    rm.grid_n.assign(static_cast<std::size_t>(dim), rm.grid_n[0]);
  if (static_cast<int>(rm.grid_n.size()) != dim)
    throw rg::BadConfig("--grid needs one entry or one per axis");
  return rm;
}

bool is_coarse(const ResolvedModel& rm) {
  for (std::size_t a = 0; a < rm.grid_n.size(); ++a)
    if (rm.grid_n[a] < rm.ref_grid[a]) return true;
  return false;
}

// ---------------------------------------------------------------------------
// shared pipeline and manifest

struct Pipeline {
  rg::GridPtr g;
  rg::AveragedFields av;
  rg::PhiSolution sol;
};

Pipeline run_solve(const ResolvedModel& rm) {
  Pipeline p;
  p.g = rg::build_grid(rm.mm, rm.grid_n, rm.eps);
  p.av = rg::average_fields(rm.mm, p.g);
  p.sol = rg::solve_phi(p.av);
  return p;
}

struct RunContext {
  std::string command;
  std::vector<std::string> argv;
  fs::path out;
  std::string started;
  json flags = json::object();
  std::vector<std::string> outputs;
};

void write_manifest(const RunContext& rc, const ResolvedModel* rm) {
  json m;
  m["command"] = rc.command;
  m["argv"] = rc.argv;
  if (rm) {
    m["source"] = rm->source;
    if (!rm->source_hash.empty()) m["source_hash"] = rm->source_hash;
    m["grid"] = rm->grid_n;
    m["eps"] = rm->eps;
  }
  m["out"] = rc.out.string();
  m["flags"] = rc.flags;
  m["outputs"] = rc.outputs;
  m["started"] = rc.started;
  m["finished"] = timestamp();
  atomic_write(rc.out / "manifest.json", json_text(m));
}

// ---------------------------------------------------------------------------
// commands

int cmd_list() {
  std::printf("%-18s %-12s %-8s %s\n", "name", "grid", "eps", "summary");
  for (const auto& e : rg::catalog()) {
    std::string gtxt;
    for (std::size_t i = 0; i < e.grid.size(); ++i)
      gtxt += (i ? "x" : "") + std::to_string(e.grid[i]);
    std::printf("%-18s %-12s %-8g %s\n", e.name.c_str(), gtxt.c_str(), e.eps,
                e.summary.c_str());
  }
  return kOk;
}

std::string phi_csv(const Pipeline& p, int d) {
  std::string s;
  for (int a = 0; a < d; ++a) s += "x" + std::to_string(a + 1) + ",";
  s += "phi";
  for (int a = 0; a < d; ++a) s += ",theta" + std::to_string(a + 1);
  s += "\n";
  const rg::GridPtr eg = p.sol.phi.g;
  std::vector<double> z(static_cast<std::size_t>(d));
  for (std::int64_t k = 0; k < eg->n_nodes; ++k) {
    eg->coords(k, z.data());
    for (int a = 0; a < d; ++a) s += fmt17(z[a]) + ",";
    s += fmt17(p.sol.phi.at(k));
    for (int a = 0; a < d; ++a) s += "," + fmt17(p.sol.grad_phi.at(k, a));
    s += "\n";
  }
  return s;
}

json validation_json(const rg::ValidationReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json row;
    row["name"] = r.name;
    row["pass"] = r.pass;
    row["value"] = r.value;
    row["detail"] = r.detail;
    rows.push_back(row);
  }
  return rows;
}

int cmd_solve(const ResolvedModel& rm, RunContext rc) {
  const auto g = rg::build_grid(rm.mm, rm.grid_n, rm.eps);
  const auto rep = rg::validate_model(rm.mm, g);
  if (!rep.ok()) {
    for (const auto& r : rep.rows)
      if (!r.pass)
        std::fprintf(stderr, "validation failed: %s (%s)\n", r.name.c_str(),
                     r.detail.c_str());
    return kInputError;
  }
  Pipeline p;
  p.g = g;
  p.av = rg::average_fields(rm.mm, g);
  p.sol = rg::solve_phi(p.av);

  json lam;
  lam["lambda"] = p.sol.lambda;
  lam["method"] = p.sol.method;
  lam["energy"] = p.sol.energy;
  lam["residual"] = p.sol.residual;
  lam["iterations"] = p.sol.iterations;
  lam["grid"] = rm.grid_n;
  lam["eps"] = rm.eps;
  if (rm.mm.oracle && rm.mm.oracle->lambda_of_eps) {
    const double lo = rm.mm.oracle->lambda_of_eps(rm.eps);
    lam["lambda_oracle"] = lo;
    lam["oracle_gap"] = std::abs(p.sol.lambda - lo);
  }
  atomic_write(rc.out / "lambda.json", json_text(lam));
  rc.outputs.push_back("lambda.json");

  atomic_write(rc.out / "phi.csv", phi_csv(p, rm.mm.d));
  rc.outputs.push_back("phi.csv");

  json diag;
  json axes = json::array();
  for (const auto& ax : g->axes) {
    json a;
    a["lo"] = ax.lo;
    a["hi"] = ax.hi;
    a["eps"] = ax.eps;
    a["n"] = ax.n;
    a["h"] = ax.h;
    axes.push_back(a);
  }
  diag["axes"] = axes;
  diag["endo_dim"] = rm.mm.d;
  diag["exo_dim"] = rm.mm.m;
  diag["marginal_mass"] = rg::quad_sum(p.av.pX);
  diag["method"] = p.sol.method;
  diag["iterations"] = p.sol.iterations;
  diag["residual"] = p.sol.residual;
  diag["has_oracle"] = static_cast<bool>(rm.mm.oracle);
  diag["validation"] = validation_json(rep);
  atomic_write(rc.out / "diagnostics.json", json_text(diag));
  rc.outputs.push_back("diagnostics.json");

  write_manifest(rc, &rm);
  std::printf("lambda %s  method %s  grid", fmt17(p.sol.lambda).c_str(),
              p.sol.method.c_str());
  for (int n : rm.grid_n) std::printf(" %d", n);
  std::printf("\n");
  return kOk;
}

int cmd_audit(const ResolvedModel& rm, double k_exp, RunContext rc) {
  Pipeline p = run_solve(rm);
  const auto rep = rg::audit_assumptions(rm.mm, p.av, k_exp);

  json out;
  out["k"] = rep.k;
  out["rho_margin"] = rep.rho_margin;
  out["concave"] = rep.concave;
  json sweeps = json::array();
  for (const auto& s : rep.integrals) {
    json r;
    r["name"] = s.name;
    r["values"] = {s.value[0], s.value[1], s.value[2]};
    r["rel_change"] = s.rel_change;
    r["trend"] = s.trend;
    r["stable"] = s.stable;
    sweeps.push_back(r);
  }
  out["integrals"] = sweeps;
  if (!rep.energy_n.empty()) {
    json en;
    en["n"] = rep.energy_n;
    en["e_phi"] = rep.energy_phi;
    en["e_psi"] = rep.energy_psi;
    en["decreasing"] = rep.energies_decreasing;
    out["energies"] = en;
  }
  out["ok"] = rep.ok();
  atomic_write(rc.out / "audit.json", json_text(out));
  rc.outputs.push_back("audit.json");

  if (!rep.energy_n.empty()) {
    std::string csv = "n,cutoff_energy_x,cutoff_energy_y\n";
    for (std::size_t i = 0; i < rep.energy_n.size(); ++i)
      csv += std::to_string(rep.energy_n[i]) + "," +
             fmt17(rep.energy_phi[i]) + "," + fmt17(rep.energy_psi[i]) + "\n";
    atomic_write(rc.out / "energies.csv", csv);
    rc.outputs.push_back("energies.csv");
  }
  write_manifest(rc, &rm);

  for (const auto& s : rep.integrals)
    std::printf("%-28s %-12s rel_change %s\n", s.name.c_str(),
                s.stable ? "stable" : "UNSTABLE", fmt17(s.rel_change).c_str());
  std::printf("concavity %s (k=%g, margin %s)\n",
              rep.concave ? "certified" : "FAILED", rep.k,
              fmt17(rep.rho_margin).c_str());
  if (!rep.ok()) return kCheckFailure;
  return kOk;
}

struct SimFlags {
  double T = 100.0;
  double dt = 1e-3;
  int paths = 16;
  std::uint64_t seed = 1;
  std::string policy = "reflect";
  std::string measure = "worst-case";
  std::int64_t thin = 0;
};

int cmd_simulate(const ResolvedModel& rm, const SimFlags& sf, RunContext rc) {
  const int d = rm.mm.d, m = rm.mm.m, dim = d + m;
  Pipeline p = run_solve(rm);

  rg::SimConfig cfg;
  cfg.T = sf.T;
  cfg.dt = sf.dt;
  cfg.n_paths = sf.paths;
  cfg.seed = sf.seed;
  cfg.boundary_policy =
      sf.policy == "reject" ? "reject-and-halve" : sf.policy;
  cfg.thin = sf.thin;

  std::vector<rg::Strategy> strategies;
  const rg::PhiSolution& sol = p.sol;
  strategies.push_back(
      {"optimal", [&sol, d](const double* x, const double*, double* th) {
         for (int j = 0; j < d; ++j) th[j] = rg::interp(sol.grad_phi, j, x);
       }});

  std::vector<rg::Observable> observables;
  for (int a = 0; a < dim; ++a) {
    const std::string nm = a < d ? "x" + std::to_string(a + 1)
                                 : "y" + std::to_string(a - d + 1);
    observables.push_back({nm, [a, d](const double* x, const double* y) {
                             return a < d ? x[a] : y[a - d];
                           }});
  }

  rg::SimResult res;
  if (sf.measure == "worst-case") {
    const auto km = rg::build_k_modification(rm.mm, p.av, p.g, rm.kbox, rm.vbox);
    const auto vs = rg::solve_vhat(rm.mm, p.av, km, p.sol);
    res = rg::simulate_worst_case(rm.mm, km, p.sol, vs, cfg, strategies,
                                  observables);
  } else if (sf.measure == "reference") {
    const auto df = rg::drift_fields(rm.mm, p.g);
    res = rg::simulate_reference(rm.mm, df, cfg, strategies, observables);
  } else {
    throw rg::BadConfig("unknown measure '" + sf.measure + "'");
  }

  double mass = 0.0;
  std::vector<double> target(static_cast<std::size_t>(dim), 0.0);
  {
    std::vector<double> z(static_cast<std::size_t>(dim));
    for (std::int64_t k = 0; k < p.g->n_nodes; ++k) {
      p.g->coords(k, z.data());
      const double pv = rm.mm.density(z.data(), z.data() + d) * p.g->wq[k];
      mass += pv;
      for (int a = 0; a < dim; ++a) target[static_cast<std::size_t>(a)] += z[a] * pv;
    }
    for (auto& t : target) t /= mass;
  }

  json summary;
  summary["measure"] = sf.measure;
  summary["T"] = res.T;
  summary["dt"] = res.dt;
  summary["n_steps"] = res.n_steps;
  summary["n_paths"] = sf.paths;
  summary["seed"] = sf.seed;
  summary["policy"] = cfg.boundary_policy;
  summary["lambda"] = p.sol.lambda;
  summary["reject_fraction"] = res.reject_fraction;
  summary["warning"] = res.warning;
  json stats = json::array();
  for (const auto& st : res.strategies) {
    json row;
    row["name"] = st.name;
    row["g_hat"] = st.g_hat;
    row["se"] = st.se;
    const double gap = std::abs(st.g_hat - p.sol.lambda);
    row["gap_to_lambda"] = gap;
    row["within_tolerance"] =
        gap <= std::max(3.0 * st.se, 0.05 * std::abs(p.sol.lambda));
    stats.push_back(row);
  }
  summary["strategies"] = stats;
  json erg;
  for (int a = 0; a < dim; ++a) {
    const auto& ta = res.time_averages[static_cast<std::size_t>(a)];
    double mean = 0.0;
    for (double v : ta) mean += v;
    mean /= static_cast<double>(ta.size());
    json row;
    row["simulated"] = mean;
    row["stationary"] = target[static_cast<std::size_t>(a)];
    erg[res.observable_names[static_cast<std::size_t>(a)]] = row;
  }
  summary["ergodic_averages"] = erg;
  atomic_write(rc.out / "summary.json", json_text(summary));
  rc.outputs.push_back("summary.json");

  std::string occ = "coordinate,bin,lo,hi,count,density\n";
  const double total = static_cast<double>(res.n_steps) * sf.paths;
  for (int a = 0; a < dim; ++a) {
    const auto& ax = p.g->axes[static_cast<std::size_t>(a)];
    const auto& counts = res.histograms[static_cast<std::size_t>(a)];
    const int nb = static_cast<int>(counts.size());
    const double w = ax.width() / nb;
    const std::string nm = res.observable_names[static_cast<std::size_t>(a)];
    for (int b = 0; b < nb; ++b) {
      occ += nm + "," + std::to_string(b) + "," + fmt17(ax.a() + b * w) + "," +
             fmt17(ax.a() + (b + 1) * w) + "," +
             std::to_string(counts[static_cast<std::size_t>(b)]) + "," +
             fmt17(static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                   (total * w)) +
             "\n";
    }
  }
  atomic_write(rc.out / "occupancy.csv", occ);
  rc.outputs.push_back("occupancy.csv");

  if (sf.thin > 0) {
    std::string pc = "path,step";
    for (int a = 0; a < dim; ++a) pc += "," + res.observable_names[static_cast<std::size_t>(a)];
    pc += "\n";
    for (std::size_t pi = 0; pi < res.thinned.size(); ++pi) {
      const auto& tr = res.thinned[pi];
      const std::size_t nrec = tr.size() / static_cast<std::size_t>(dim);
      for (std::size_t r = 0; r < nrec; ++r) {
        pc += std::to_string(pi) + "," + std::to_string(r * static_cast<std::size_t>(sf.thin));
        for (int a = 0; a < dim; ++a)
          pc += "," + fmt17(tr[r * static_cast<std::size_t>(dim) + static_cast<std::size_t>(a)]);
        pc += "\n";
      }
    }
    atomic_write(rc.out / "paths.csv", pc);
    rc.outputs.push_back("paths.csv");
  }

  rc.flags["T"] = sf.T;
  rc.flags["dt"] = sf.dt;
  rc.flags["paths"] = sf.paths;
  rc.flags["seed"] = sf.seed;
  rc.flags["policy"] = cfg.boundary_policy;
  rc.flags["measure"] = sf.measure;
  rc.flags["thin"] = sf.thin;
  write_manifest(rc, &rm);

  for (const auto& st : res.strategies)
    std::printf("%-10s g_hat %s  se %s  (lambda %s)\n", st.name.c_str(),
                fmt17(st.g_hat).c_str(), fmt17(st.se).c_str(),
                fmt17(p.sol.lambda).c_str());
  if (!res.warning.empty()) std::printf("warning: %s\n", res.warning.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyRow {
  std::string name;
  double value = 0.0;
  double tol = 0.0;
  std::string status;  // pass | fail | xfail
  std::string detail;
};

double product_bump(const double* z, const double* c, const double* w, int d) {
  double v = 1.0;
  for (int a = 0; a < d; ++a) {
    const double s = (z[a] - c[a]) / w[a];
    if (std::abs(s) >= 1.0) return 0.0;
    const double t = 1.0 - s * s;
    v *= t * t;
  }
  return v;
}

rg::Field bump_field(const rg::GridPtr& eg, const std::vector<double>& centers,
                     const std::vector<double>& widths,
                     const std::vector<double>& amps) {
  const int d = eg->dim();
  rg::Field f = rg::make_field(eg, 1);
  const std::size_t nb = amps.size();
  std::vector<double> z(static_cast<std::size_t>(d));
  for (std::int64_t k = 0; k < eg->n_nodes; ++k) {
    eg->coords(k, z.data());
    double v = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      v += amps[b] * product_bump(z.data(),
                                  centers.data() + b * static_cast<std::size_t>(d),
                                  widths.data() + b * static_cast<std::size_t>(d), d);
    f.at(k) = v;
  }
  return f;
}

// The potential carries an arbitrary additive constant, so the comparison
// quotients it out over the trimmed interior itself.
double oracle_linf(const rg::MarketModel& mm, const Pipeline& p) {
  const rg::GridPtr eg = p.sol.phi.g;
  const int d = eg->dim();
  std::vector<double> z(static_cast<std::size_t>(d));
  std::vector<std::int64_t> interior;
  std::vector<double> diff;
  for (std::int64_t k = 0; k < eg->n_nodes; ++k) {
    eg->coords(k, z.data());
    bool inside = true;
    for (int a = 0; a < d; ++a) {
      const auto& ax = eg->axes[static_cast<std::size_t>(a)];
      const double margin = 0.05 * ax.width();
      if (z[a] < ax.a() + margin || z[a] > ax.b() - margin) inside = false;
    }
    if (!inside) continue;
    interior.push_back(k);
    diff.push_back(p.sol.phi.at(k) - mm.oracle->phi(z.data()));
  }
  double shift = 0.0;
  for (double v : diff) shift += v;
  shift /= static_cast<double>(diff.size());
  double worst = 0.0;
  for (double v : diff) worst = std::max(worst, std::abs(v - shift));
  return worst;
}

double oracle_gradient_gap(const rg::MarketModel& mm) {
  const int d = mm.d;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> z(static_cast<std::size_t>(d)), zp(static_cast<std::size_t>(d)),
      zm(static_cast<std::size_t>(d)), th(static_cast<std::size_t>(d));
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    for (int a = 0; a < d; ++a) {
      const double lo = mm.ebox.lo[static_cast<std::size_t>(a)];
      const double w = mm.ebox.hi[static_cast<std::size_t>(a)] - lo;
      z[static_cast<std::size_t>(a)] = lo + (0.1 + 0.8 * u(rng)) * w;
    }
    mm.oracle->theta(z.data(), th.data());
    for (int a = 0; a < d; ++a) {
      const double w = mm.ebox.hi[static_cast<std::size_t>(a)] -
                       mm.ebox.lo[static_cast<std::size_t>(a)];
      const double h = 1e-5 * w;
      zp = z;
      zm = z;
      zp[static_cast<std::size_t>(a)] += h;
      zm[static_cast<std::size_t>(a)] -= h;
      const double fd =
          (mm.oracle->phi(zp.data()) - mm.oracle->phi(zm.data())) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - th[static_cast<std::size_t>(a)]));
    }
  }
  return worst;
}

double stationarity_defect(const Pipeline& p) {
  const rg::GridPtr eg = p.sol.phi.g;
  const int d = eg->dim();
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::vector<double> c(static_cast<std::size_t>(d)), w(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) {
      const auto& ax = eg->axes[static_cast<std::size_t>(a)];
      const double frac = 0.15 + 0.7 * ((t + 3 * a) % 10) / 9.0;
      c[static_cast<std::size_t>(a)] = ax.a() + frac * ax.width();
      w[static_cast<std::size_t>(a)] = 0.1 * ax.width();
    }
    const rg::Field psi = bump_field(eg, c, w, {1.0});
    worst = std::max(
        worst, std::abs(rg::energy_gateaux(p.sol, psi, p.av.A, p.av.divA)));
  }
  return worst;
}

double ibp_identity_gap(const Pipeline& p) {
  const rg::GridPtr eg = p.sol.phi.g;
  const int d = eg->dim();
  const double dq = rg::divergence_quadratic(p.av.A, p.av.divA);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    std::vector<double> c, w, amps;
    for (int b = 0; b < 3; ++b) {
      amps.push_back(0.05 + 0.25 * u(rng));
      for (int a = 0; a < d; ++a) {
        const auto& ax = eg->axes[static_cast<std::size_t>(a)];
        c.push_back(ax.a() + (0.35 + 0.3 * u(rng)) * ax.width());
        w.push_back((0.14 + 0.12 * u(rng)) * ax.width());
      }
    }
    const rg::Field phi = bump_field(eg, c, w, amps);
    const double lhs = rg::ibp_growth_functional(phi, p.av.A);
    const double rhs = dq - 0.5 * rg::variational_energy(phi, p.av.A, p.av.divA);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

double poincare_worst_ratio(const rg::GridPtr& g, const rg::VSolution& vs) {
  const rg::GridPtr gd = rg::exo_grid(g);
  const rg::GridPtr ge = rg::endo_grid(g);
  const std::int64_t ne = ge->n_nodes;
  const std::int64_t nd = gd->n_nodes;
  rg::Field w = rg::make_field(gd, 1);
  const std::int64_t mid = ne / 2;
  for (std::int64_t j = 0; j < nd; ++j) w.at(j) = vs.w.at(mid * nd + j);

  const int m = gd->dim();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  std::vector<double> z(static_cast<std::size_t>(m));
  for (int t = 0; t < 20; ++t) {
    std::vector<double> ac(static_cast<std::size_t>(3 * m)), bc(static_cast<std::size_t>(3 * m));
    for (auto& v : ac) v = u(rng);
    for (auto& v : bc) v = u(rng);
    rg::Field uf = rg::make_field(gd, 1);
    rg::Field du = rg::make_field(gd, m);
    for (std::int64_t j = 0; j < nd; ++j) {
      gd->coords(j, z.data());
      double val = 0.0;
      for (int a = 0; a < m; ++a) {
        const auto& ax = gd->axes[static_cast<std::size_t>(a)];
        const double s = (z[static_cast<std::size_t>(a)] - ax.a()) / ax.width();
        double dv = 0.0;
        for (int k = 1; k <= 3; ++k) {
          const double om = k * M_PI;
          const double A = ac[static_cast<std::size_t>(3 * a + k - 1)];
          const double B = bc[static_cast<std::size_t>(3 * a + k - 1)];
          val += A * std::cos(om * s) + B * std::sin(om * s);
          dv += (-A * std::sin(om * s) + B * std::cos(om * s)) * om / ax.width();
        }
        du.at(j, a) = dv;
      }
      uf.at(j) = val;
    }
    const auto [lhs, rhs] = rg::weighted_poincare(w, uf, du);
    if (rhs > 0.0) worst = std::max(worst, lhs / rhs);
  }
  return worst;
}

int cmd_verify(const ResolvedModel& rm, double mc_T, RunContext rc) {
  const bool coarse = is_coarse(rm);
  std::vector<VerifyRow> rows;
  const auto push = [&](const std::string& name, double value, double tol,
                        bool pass, bool coarse_sensitive,
                        const std::string& detail = "") {
    VerifyRow r{name, value, tol, "pass", detail};
    if (!pass) r.status = (coarse && coarse_sensitive) ? "xfail" : "fail";
    rows.push_back(r);
  };

  const auto g = rg::build_grid(rm.mm, rm.grid_n, rm.eps);
  {
    const auto rep = rg::validate_model(rm.mm, g);
    int bad = 0;
    std::string detail;
    for (const auto& r : rep.rows)
      if (!r.pass) {
        ++bad;
        detail += (detail.empty() ? "" : "; ") + r.name;
      }
    push("model-validation", bad, 0.0, rep.ok(), true, detail);
  }

  Pipeline p;
  p.g = g;
  p.av = rg::average_fields(rm.mm, g);
  p.sol = rg::solve_phi(p.av);

  if (rm.mm.oracle) {
    const double gap = oracle_linf(rm.mm, p);
    push("closed-form-linf", gap, 1e-3, gap <= 1e-3, true);
    const double ggap = oracle_gradient_gap(rm.mm);
    push("oracle-gradient-consistency", ggap, 1e-6, ggap <= 1e-6, false);
  }
  if (rm.mm.name == "tractable")
    push("gradient-case-detected", p.sol.method == "gradient-case" ? 1.0 : 0.0,
         1.0, p.sol.method == "gradient-case", false, p.sol.method);

  {
    const double defect = stationarity_defect(p);
    push("stationarity", defect, 1e-6, defect <= 1e-6, true);
  }
  {
    const double gap = ibp_identity_gap(p);
    push("ibp-identity", gap, 1e-4, gap <= 1e-4, true);
  }

  if (rm.mm.d == 1) {
    const auto km = rg::build_k_modification(rm.mm, p.av, g, rm.kbox, rm.vbox);
    push("kmod-preservation", km.preservation, 1e-8, km.preservation <= 1e-8,
         true);
    const auto vs = rg::solve_vhat(rm.mm, p.av, km, p.sol);
    double worst_ratio = 0.0;
    for (const auto& s : vs.slices)
      if (s.wnorm_rhs > 0.0)
        worst_ratio = std::max(worst_ratio, s.wnorm_lhs / s.wnorm_rhs);
    push("slice-bound", worst_ratio, 1.05,
         vs.bound_failures == 0 && worst_ratio <= 1.05, true,
         vs.bound_failures ? std::to_string(vs.bound_failures) + " slices failed"
                           : "");
    const double pr = poincare_worst_ratio(g, vs);
    push("weighted-poincare", pr, 1.0, pr <= 1.0, true);
  }

  if (rm.mm.d == 1 && rm.mm.m == 1) {
    try {
      const auto et = rg::test_function_energies(p.av, {8, 16, 32});
      double min_ratio = 1e300;
      for (std::size_t i = 0; i + 1 < et.n.size(); ++i) {
        min_ratio = std::min(min_ratio, et.e_phi[i] / et.e_phi[i + 1]);
        min_ratio = std::min(min_ratio, et.e_psi[i] / et.e_psi[i + 1]);
      }
      push("cutoff-energies", min_ratio, 1.5,
           min_ratio >= 1.5 && et.phi_decreasing && et.psi_decreasing, true);
    } catch (const rg::ResolutionTooCoarse& e) {
      push("cutoff-energies", 0.0, 1.5, false, true, e.what());
    }

    {
      const auto df = rg::drift_fields(rm.mm, g);
      rg::SimConfig cfg;
      cfg.T = mc_T > 0.0 ? mc_T : 500.0;
      cfg.dt = 1e-3;
      cfg.n_paths = 4;
      cfg.seed = 1;
      const auto res = rg::simulate_reference(rm.mm, df, cfg);
      const rg::GridPtr gd = rg::exo_grid(g);
      rg::Field py = rg::make_field(gd, 1);
      const rg::GridPtr ge = rg::endo_grid(g);
      std::vector<double> zx(1), zy(1);
      for (std::int64_t j = 0; j < gd->n_nodes; ++j) {
        zy[0] = gd->axes[0].x[static_cast<std::size_t>(j)];
        double acc = 0.0;
        for (std::int64_t i = 0; i < ge->n_nodes; ++i) {
          zx[0] = ge->axes[0].x[static_cast<std::size_t>(i)];
          acc += rm.mm.density(zx.data(), zy.data()) * ge->wq[i];
        }
        py.at(j) = acc;
      }
      const double tvx = rg::histogram_tv(res, 0, p.av.pX, 0);
      const double tvy = rg::histogram_tv(res, 1, py, 0);
      const double tv = std::max(tvx, tvy);
      push("ergodic-occupation", tv, 0.05, tv <= 0.05, true);
    }
  }

  json out;
  out["source"] = rm.source;
  out["grid"] = rm.grid_n;
  out["eps"] = rm.eps;
  out["coarse"] = coarse;
  json jrows = json::array();
  int n_fail = 0, n_xfail = 0;
  for (const auto& r : rows) {
    if (r.status == "fail") ++n_fail;
    if (r.status == "xfail") ++n_xfail;
    json row;
    row["name"] = r.name;
    row["value"] = r.value;
    row["tolerance"] = r.tol;
    row["status"] = r.status;
    row["detail"] = r.detail;
    jrows.push_back(row);
  }
  out["rows"] = jrows;
  out["n_fail"] = n_fail;
  out["n_xfail"] = n_xfail;
  atomic_write(rc.out / "verify.json", json_text(out));
  rc.outputs.push_back("verify.json");
  write_manifest(rc, &rm);

  std::printf("%-28s %-22s %-12s %s\n", "check", "value", "tolerance",
              "status");
  for (const auto& r : rows)
    std::printf("%-28s %-22s %-12s %s\n", r.name.c_str(),
                fmt17(r.value).c_str(), fmt17(r.tol).c_str(),
                r.status.c_str());
  if (n_fail > 0) {
    std::printf("%d check(s) failed\n", n_fail);
    return kCheckFailure;
  }
  if (n_xfail > 0)
    std::printf("%d check(s) marked expected-fail at coarse resolution\n",
                n_xfail);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust growth-optimal portfolios under stochastic covariance"};
  app.require_subcommand(1);

  std::string model_path, example_name, out_dir = ".";
  std::vector<int> grid;
  double eps = -1.0;
  SimFlags sf;
  double audit_k = 0.0;
  double verify_T = -1.0;

  const auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--model", model_path, "model document (JSON)");
    c->add_option("--example", example_name, "catalog example name");
    c->add_option("--grid", grid, "grid nodes per axis")->delimiter(',');
    c->add_option("--eps", eps, "boundary truncation");
    c->add_option("--out", out_dir, "output directory");
  };

  app.add_subcommand("list", "list catalog examples");
  auto* c_solve =
      app.add_subcommand("solve", "solve for the optimal potential and rate");
  add_model_flags(c_solve);
  auto* c_audit =
      app.add_subcommand("audit", "sweep the standing assumptions");
  add_model_flags(c_audit);
  c_audit->add_option("--k", audit_k, "slice weight exponent (0 = auto)");
  auto* c_sim = app.add_subcommand("simulate", "run the path simulator");
  add_model_flags(c_sim);
  c_sim->add_option("--T", sf.T, "horizon");
  c_sim->add_option("--dt", sf.dt, "step size");
  c_sim->add_option("--paths", sf.paths, "number of paths");
  c_sim->add_option("--seed", sf.seed, "random seed");
  c_sim->add_option("--policy", sf.policy, "boundary policy: reflect|reject");
  c_sim->add_option("--measure", sf.measure,
                    "dynamics: worst-case|reference");
  c_sim->add_option("--thin", sf.thin, "record every thin-th state");
  auto* c_verify =
      app.add_subcommand("verify", "run the verification checklist");
  add_model_flags(c_verify);
  c_verify->add_option("--T", verify_T, "occupation-check horizon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  RunContext rc;
  rc.argv.assign(argv, argv + argc);
  rc.out = out_dir;
  rc.started = timestamp();

  try {
    if (app.got_subcommand("list")) return cmd_list();

    ResolvedModel rm = resolve_model(example_name, model_path, grid, eps);
    rc.flags["grid"] = rm.grid_n;
    rc.flags["eps"] = rm.eps;

    if (app.got_subcommand("solve")) {
      rc.command = "solve";
      return cmd_solve(rm, std::move(rc));
    }
    if (app.got_subcommand("audit")) {
      rc.command = "audit";
      rc.flags["k"] = audit_k;
      return cmd_audit(rm, audit_k, std::move(rc));
    }
    if (app.got_subcommand("simulate")) {
      rc.command = "simulate";
      return cmd_simulate(rm, sf, std::move(rc));
    }
    rc.command = "verify";
    return cmd_verify(rm, verify_T, std::move(rc));
  } catch (const rg::BadConfig& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputError;
  } catch (const rg::ParamViolation& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputError;
  } catch (const rg::BadDomain& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputError;
  } catch (const rg::BadResolution& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputError;
  } catch (const rg::BadNesting& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputError;
  } catch (const rg::OutOfDomain& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputError;
  } catch (const rg::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
}
