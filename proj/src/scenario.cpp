#include "conic/scenario.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <set>

#include "conic/legendrian.hpp"
#include "conic/numerics/parallel.hpp"
#include "conic/oracle.hpp"
#include "conic/smatrix.hpp"
#include "conic/sojourn.hpp"
#include "conic/wkb.hpp"

namespace conic {

namespace {

// Typed reader over one JSON object; finish() rejects whatever was not read.
class Block {
 public:
  Block(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw SchemaError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw SchemaError(where_ + ": missing '" + key + "'");
    return j_.at(key);
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(where_ + ": missing '" + key + "'");
    }
    const Json& v = raw(key);
    if (!v.is_number()) throw SchemaError(path(key) + ": expected a number");
    return v.get<double>();
  }

  long long integer(const std::string& key, std::optional<long long> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(where_ + ": missing '" + key + "'");
    }
    const Json& v = raw(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())
      return static_cast<long long>(v.get<double>());
    throw SchemaError(path(key) + ": expected an integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) throw SchemaError(path(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(where_ + ": missing '" + key + "'");
    }
    const Json& v = raw(key);
    if (!v.is_string()) throw SchemaError(path(key) + ": expected a string");
    return v.get<std::string>();
  }

  Vec vec(const std::string& key, int n) { return vector_of(raw(key), path(key), n); }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(where_ + ": missing '" + key + "'");
    }
    const Json& v = raw(key);
    if (v.is_number()) return {v.get<double>()};
    const Vec x = vector_of(v, path(key), -1);
    return {x.data(), x.data() + x.size()};
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) throw SchemaError(where_ + ": unknown key '" + key + "'");
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  static Vec vector_of(const Json& v, const std::string& where, int n) {
    if (!v.is_array() || v.empty()) throw SchemaError(where + ": expected an array of numbers");
    if (n > 0 && static_cast<int>(v.size()) != n)
      throw SchemaError(where + ": expected " + std::to_string(n) + " components, got " +
                        std::to_string(v.size()));
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw SchemaError(where + ": expected an array of numbers");
      out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> used_;
};

std::vector<PhasePoint> read_points(const Json& j, const std::string& where, int n) {
  if (!j.is_array() || j.empty()) throw SchemaError(where + ": expected a nonempty array");
  std::vector<PhasePoint> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Block b(j[i], where + "[" + std::to_string(i) + "]");
    PhasePoint p{b.vec("z", n), b.vec("zeta", n), {}};
    b.finish();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::pair<double, double>> read_grid(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw SchemaError(where + ": expected a nonempty array of [s, s'] pairs");
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vec p = Block::vector_of(j[i], where + "[" + std::to_string(i) + "]", 2);
    out.emplace_back(p(0), p(1));
  }
  return out;
}

std::vector<std::string> columns(const std::string& stem, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

template <typename... Parts>
std::vector<std::string> header(Parts&&... parts) {
  std::vector<std::string> out;
  auto add = [&](auto&& p) {
    if constexpr (std::is_convertible_v<decltype(p), std::string>) out.push_back(p);
    else out.insert(out.end(), p.begin(), p.end());
  };
  (add(std::forward<Parts>(parts)), ...);
  return out;
}

void append(std::vector<double>& row, const Vec& v) { row.insert(row.end(), v.data(), v.data() + v.size()); }

// Uniform points in a ball and uniform directions, from one seeded stream.
struct RandomSource {
  std::mt19937_64 rng;
  explicit RandomSource(std::uint64_t seed) : rng(seed) {}

  Vec in_ball(int n, double radius) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec z(n);
    do {
      for (int i = 0; i < n; ++i) z(i) = u(rng);
    } while (z.squaredNorm() > 1.0);
    return radius * z;
  }

  Vec direction(int n) {
    std::normal_distribution<double> g;
    Vec w(n);
    do {
      for (int i = 0; i < n; ++i) w(i) = g(rng);
    } while (w.norm() < 1e-8);
    return w.normalized();
  }
};

struct Context {
  const Scenario& s;
  ManifoldModel m;
  std::filesystem::path out;
  unsigned jobs = 1;
  std::map<std::string, double> tol;
  RunResult& result;

  void check(const std::string& name, double value) {
    const double t = tol.at(name);
    result.checks.push_back({name, value, t, value <= t});
  }
  void csv(const std::string& name, const CsvTable& table) {
    table.write(out / name);
    result.files.push_back(name);
  }
  void json(const std::string& name, const Json& j) {
    write_text(out / name, j.dump(2) + "\n");
    result.files.push_back(name);
  }
  void plot(const std::string& name, const PlotSpec& spec) {
    write_text(out / name, gnuplot_script(spec));
    result.files.push_back(name);
  }
  bool flat() const { return m.label == "flat"; }
};

const std::map<std::string, std::map<std::string, double>>& tolerance_table() {
  static const std::map<std::string, std::map<std::string, double>> table{
      {"trace", {{"drift", 1e-8}}},
      {"sojourn", {{"extrapolation", 1e-5}, {"flat_nu", 1e-8}, {"flat_M", 1e-7}}},
      {"smatrix", {{"direction", 1e-8}, {"singular", 1e-8}}},
      {"propagator", {{"free_kernel", 1e-12}}},
      {"legendrian",
       {{"characteristic", 1e-9}, {"lagrangian", 1e-5}, {"ratio", 1e-3}, {"leaf", 5e-3},
        {"leaf_energy", 1e-9}, {"phase_map", 1e-6}, {"eikonal", 1e-5}}},
      {"validate", {{"relative", 1e-6}, {"flat_nu", 1e-8}, {"flat_M", 1e-7}}},
      {"trapping", {{"trapped_radius", 1e-3}, {"trapped_fraction", 0.0}}},
  };
  return table;
}

// ---------------------------------------------------------------------------

void run_trace(Context& c) {
  Block p(c.s.parameters, "parameters");
  const auto points = read_points(p.raw("points"), "parameters.points", c.m.n);
  const std::string direction = p.string("direction", "both");
  FlowOptions o;
  o.s_max = p.number("s_max", 1e6);
  o.escape_radius = p.number("escape_radius", 1e3);
  o.symplectic = p.boolean("symplectic", false);
  o.fixed_step = p.number("fixed_step", 1e-2);
  p.finish();
  std::vector<Direction> dirs;
  if (direction == "forward" || direction == "both") dirs.push_back(Direction::forward);
  if (direction == "backward" || direction == "both") dirs.push_back(Direction::backward);
  if (dirs.empty()) throw SchemaError("parameters.direction: expected forward, backward or both");

  const double l0 = c.s.lambda0;
  const std::size_t count = points.size() * dirs.size();
  std::vector<Trajectory> runs(count);
  numerics::parallel_for(count, c.jobs, [&](std::size_t k) {
    const PhasePoint& q = points[k / dirs.size()];
    const PhasePoint start{q.z, project_to_shell(c.m, q.z, q.zeta, l0), {}};
    runs[k] = integrate_bicharacteristic(start, c.m, l0, dirs[k % dirs.size()], o);
  });

  const int n = c.m.n;
  CsvTable table(header("point", "direction", "s", columns("z", n), columns("zeta", n), "A", "drift"));
  Json summary = Json::array();
  double drift = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const Trajectory& t = runs[k];
    const double sign = t.direction == Direction::forward ? 1.0 : -1.0;
    for (const FlowSample& q : t.samples) {
      std::vector<double> row{static_cast<double>(k / dirs.size()), sign, q.s};
      append(row, q.z);
      append(row, q.zeta);
      row.push_back(q.A);
      row.push_back(std::abs(hamiltonian(c.m, q.z, q.zeta, l0)) / (l0 * l0));
      table.add_row(row);
    }
    drift = std::max(drift, t.diagnostics.max_drift);
    summary.push_back({{"point", k / dirs.size()},
                       {"direction", sign > 0 ? "forward" : "backward"},
                       {"escaped", t.escaped()},
                       {"samples", t.samples.size()},
                       {"accepted_steps", t.diagnostics.accepted},
                       {"rejected_steps", t.diagnostics.rejected},
                       {"max_drift", t.diagnostics.max_drift},
                       {"final_radius", t.back().z.norm()}});
  }
  c.csv("trace.csv", table);
  c.json("trace.json", {{"trajectories", summary}});
  c.plot("trace.gp", {"bicharacteristics", "trace.csv", "z_1", "z_2", 4, {5}, {"paths"}, true});
  c.check("drift", drift);
}

struct SojournRow {
  PhasePoint start;
  SojournDatum datum;
};

// Flat closed forms: nu = -lambda0 z0.w, M = -lambda0 (z0 - (z0.w) w), w = zeta0 / |zeta0|.
std::pair<double, Vec> flat_sojourn(const PhasePoint& q, double l0) {
  const Vec w = q.zeta.normalized();
  const double zw = q.z.dot(w);
  return {-l0 * zw, -l0 * (q.z - zw * w)};
}

std::vector<PhasePoint> sojourn_points(Block& p, const Context& c) {
  const bool listed = p.has("points"), random = p.has("random");
  if (listed == random) throw SchemaError("parameters: give exactly one of 'points' and 'random'");
  if (listed) return read_points(p.raw("points"), "parameters.points", c.m.n);
  Block r(p.raw("random"), "parameters.random");
  const long long count = r.integer("count", 100);
  const double radius = r.number("radius", 5.0);
  r.finish();
  if (count <= 0 || !(radius > 0.0)) throw SchemaError("parameters.random: need count > 0 and radius > 0");
  RandomSource rs(c.s.seed);
  std::vector<PhasePoint> pts;
  for (long long i = 0; i < count; ++i) {
    Vec z = rs.in_ball(c.m.n, radius);
    pts.push_back({z, c.s.lambda0 * rs.direction(c.m.n), {}});
  }
  return pts;
}

std::vector<SojournRow> compute_sojourn(const Context& c, const std::vector<PhasePoint>& pts) {
  SojournOptions o;
  o.extrapolation.tolerance = c.tol.at("extrapolation");
  std::vector<SojournRow> rows(pts.size());
  numerics::parallel_for(pts.size(), c.jobs, [&](std::size_t k) {
    const PhasePoint start{pts[k].z, project_to_shell(c.m, pts[k].z, pts[k].zeta, c.s.lambda0), {}};
    rows[k] = {start, sojourn_forward(start, c.m, c.s.lambda0, o)};
    rows[k].datum.trajectory = {};  // keep memory flat; only the limits are reported
  });
  return rows;
}

void run_sojourn(Context& c) {
  Block p(c.s.parameters, "parameters");
  const int n = c.m.n;
  const double l0 = c.s.lambda0;
  SojournOptions o;
  o.extrapolation.tolerance = c.tol.at("extrapolation");
  // Escape from the ball takes |s| of order r / lambda0; much longer means trapped.
  const double outer = o.extrapolation.base_radius * o.extrapolation.node_multiples.back();
  o.flow.s_max = p.number("s_max", 10.0 * outer / l0);
  if (!(o.flow.s_max > 0.0)) throw SchemaError("parameters.s_max: must be positive");
  // Seeds are either phase points (listed or random) or incoming data {y_in, impact}.
  std::vector<PhasePoint> pts;
  std::vector<std::pair<Vec, Vec>> incoming;
  if (p.has("incoming")) {
    if (p.has("points") || p.has("random"))
      throw SchemaError("parameters: 'incoming' excludes 'points' and 'random'");
    const Json& j = p.raw("incoming");
    if (!j.is_array() || j.empty()) throw SchemaError("parameters.incoming: expected a nonempty array");
    for (std::size_t i = 0; i < j.size(); ++i) {
      Block b(j[i], "parameters.incoming[" + std::to_string(i) + "]");
      incoming.emplace_back(b.vec("y_in", n).normalized(), b.vec("impact", n));
      b.finish();
    }
  } else {
    pts = sojourn_points(p, c);
  }
  p.finish();

  const std::size_t count = incoming.empty() ? pts.size() : incoming.size();
  std::vector<PhasePoint> starts(count);
  std::vector<TotalSojourn> runs(count);
  numerics::parallel_for(count, c.jobs, [&](std::size_t k) {
    if (incoming.empty()) {
      starts[k] = {pts[k].z, project_to_shell(c.m, pts[k].z, pts[k].zeta, l0), {}};
      runs[k] = total_sojourn(starts[k], c.m, l0, o);
    } else {
      const auto& [y, b] = incoming[k];
      const Vec impact = b - b.dot(y) * y;
      starts[k] = incoming_seed(y, impact, c.m, l0, o);
      runs[k] = total_sojourn(starts[k], c.m, l0, o, y);
    }
    runs[k].forward.trajectory = {};  // only the limits are reported
    runs[k].backward.trajectory = {};
  });

  CsvTable table(header(columns("y_in", n), columns("y_out", n), "nu", columns("M", n), "tau",
                        "residual_forward", "residual_backward", columns("z0", n),
                        columns("zeta0", n), "nu_closed_form"));
  double nu_err = 0.0, m_err = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const TotalSojourn& t = runs[k];
    std::vector<double> row;
    append(row, t.y_in);
    append(row, t.y_out);
    row.push_back(t.forward.nu);
    append(row, t.forward.M);
    row.insert(row.end(), {t.tau, t.forward.report.residual, t.backward.report.residual});
    append(row, starts[k].z);
    append(row, starts[k].zeta);
    double closed = std::numeric_limits<double>::quiet_NaN();
    if (c.flat()) {
      const auto [nu, M] = flat_sojourn(starts[k], l0);
      closed = nu;
      nu_err = std::max(nu_err, std::abs(t.forward.nu - nu));
      m_err = std::max(m_err, (t.forward.M - M).norm());
    }
    row.push_back(closed);
    table.add_row(row);
  }
  c.csv("sojourn.csv", table);
  c.plot("sojourn.gp", {"sojourn relation", "sojourn.csv", "tau", "nu", 3 * n + 2,
                        {2 * n + 1}, {"nu"}, true});
  if (c.flat()) {
    c.check("flat_nu", nu_err);
    c.check("flat_M", m_err);
  }
}

// Rotation of y by angle a in the (e1, e2) plane, for deflection targets in n = 2.
Vec rotate2(const Vec& y, double a) {
  Vec r(2);
  r << std::cos(a) * y(0) - std::sin(a) * y(1), std::sin(a) * y(0) + std::cos(a) * y(1);
  return r;
}

void run_smatrix(Context& c) {
  Block p(c.s.parameters, "parameters");
  const int n = c.m.n;
  struct Target {
    Vec y_in;
    Vec y_out;
    std::optional<double> deflection;
  };
  auto read_target = [&](Block& b) {
    Target t{b.vec("y_in", n).normalized(), {}, {}};
    if (b.has("deflection")) {
      if (b.has("y_out")) throw SchemaError("parameters: give exactly one of 'y_out' and 'deflection'");
      if (n != 2) throw SchemaError("parameters: 'deflection' needs n = 2");
      t.deflection = b.number("deflection");
      t.y_out = rotate2(t.y_in, *t.deflection);
    } else {
      t.y_out = b.vec("y_out", n).normalized();
    }
    return t;
  };
  std::vector<Target> targets;
  if (p.has("directions")) {
    const Json& j = p.raw("directions");
    if (!j.is_array() || j.empty()) throw SchemaError("parameters.directions: expected a nonempty array");
    for (std::size_t i = 0; i < j.size(); ++i) {
      Block b(j[i], "parameters.directions[" + std::to_string(i) + "]");
      targets.push_back(read_target(b));
      b.finish();
    }
  } else {
    targets.push_back(read_target(p));
  }
  const std::vector<double> lambdas = p.numbers("lambda");
  SMatrixOptions o;
  o.impact_max = p.number("impact_max", o.impact_max);
  o.impact_grid = static_cast<int>(p.integer("impact_grid", o.impact_grid));
  p.finish();
  if (o.impact_grid < 3 || !(o.impact_max > 0.0))
    throw SchemaError("parameters: need impact_grid >= 3 and impact_max > 0");
  o.direction_tol = c.tol.at("direction");
  o.singular_tol = c.tol.at("singular");
  o.jobs = c.jobs;

  CsvTable table(header(columns("y_in", n), columns("y_out", n), "lambda", "re", "im", "n_geodesics",
                        "phase_convention_sensitive"));
  Json sidecar = Json::array();
  for (const Target& t : targets) {
    const ConnectingSearch search =
        t.deflection ? find_connecting_geodesics_by_deflection(t.y_in, *t.deflection, c.m, c.s.lambda0, o)
                     : find_connecting_geodesics(t.y_in, t.y_out, c.m, c.s.lambda0, o);
    Json geos = Json::array();
    for (const ConnectingGeodesic& g : search.geodesics)
      geos.push_back({{"impact", to_json(g.impact)}, {"y_out", to_json(g.y_out)},
                      {"tau", g.sojourn.tau}, {"sigma", g.sojourn.sigma.value_or(0.0)},
                      {"deflection", g.sojourn.deflection},
                      {"newton_iterations", g.newton.iterations},
                      {"newton_residual", g.newton.residual}});
    Json entries = Json::array();
    for (double lambda : lambdas) {
      const SMatrixEntry e = assemble_smatrix(lambda, search, n);
      std::vector<double> row;
      append(row, t.y_in);
      append(row, t.y_out);
      row.insert(row.end(), {lambda, e.value.real(), e.value.imag(),
                             static_cast<double>(e.contributions.size()),
                             e.phase_convention_sensitive ? 1.0 : 0.0});
      table.add_row(row);
      Json parts = Json::array();
      for (const SMatrixContribution& k : e.contributions)
        parts.push_back({{"impact", to_json(k.impact)}, {"sigma", k.sigma}, {"tau", k.tau},
                         {"amplitude", k.amplitude}, {"phase", k.phase},
                         {"re", k.value.real()}, {"im", k.value.imag()}});
      entries.push_back({{"lambda", lambda}, {"re", e.value.real()}, {"im", e.value.imag()},
                         {"phase_convention_sensitive", e.phase_convention_sensitive},
                         {"contributions", parts}});
    }
    Json item{{"y_in", to_json(t.y_in)}, {"y_out", to_json(t.y_out)}};
    if (t.deflection) item["deflection"] = *t.deflection;
    item["search"] = search.report;
    item["geodesics"] = geos;
    item["entries"] = entries;
    sidecar.push_back(item);
  }
  c.csv("smatrix.csv", table);
  c.json("smatrix.json", {{"directions", sidecar}});
  c.plot("smatrix.gp", {"S-matrix entry", "smatrix.csv", "lambda", "value", 2 * n + 1,
                        {2 * n + 2, 2 * n + 3}, {"re", "im"}, true});
}

void run_propagator(Context& c) {
  Block p(c.s.parameters, "parameters");
  const int n = c.m.n;
  Block g(p.raw("grid"), "parameters.grid");
  const Vec lo = g.vec("min", n), hi = g.vec("max", n), counts = g.vec("count", n);
  g.finish();
  std::vector<Vec> zps;
  const Json& zj = p.raw("zp");
  if (zj.is_array() && !zj.empty() && zj[0].is_array()) {
    for (std::size_t i = 0; i < zj.size(); ++i)
      zps.push_back(Block::vector_of(zj[i], "parameters.zp[" + std::to_string(i) + "]", n));
  } else {
    zps.push_back(Block::vector_of(zj, "parameters.zp", n));
  }
  const std::vector<double> times = p.numbers("t");
  const int order = static_cast<int>(p.integer("order", 0));
  p.finish();
  if (order != 0 && order != 1) throw SchemaError("parameters.order: expected 0 or 1");
  for (double t : times)
    if (!(t > 0.0)) throw SchemaError("parameters.t: times must be positive");

  std::vector<int> cnt(n);
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) {
    cnt[i] = static_cast<int>(counts(i));
    if (cnt[i] < 1 || counts(i) != cnt[i]) throw SchemaError("parameters.grid.count: positive integers");
    total *= static_cast<std::size_t>(cnt[i]);
  }
  // Row-major grid, last coordinate fastest.
  auto grid_point = [&](std::size_t k) {
    Vec z(n);
    for (int i = n - 1; i >= 0; --i) {
      const int j = static_cast<int>(k % static_cast<std::size_t>(cnt[i]));
      k /= static_cast<std::size_t>(cnt[i]);
      z(i) = cnt[i] == 1 ? lo(i) : lo(i) + (hi(i) - lo(i)) * j / (cnt[i] - 1);
    }
    return z;
  };

  struct Cell {
    Vec z, zp;
    std::optional<Amplitude> amplitude;
  };
  std::vector<Cell> cells(total * zps.size());
  numerics::parallel_for(cells.size(), c.jobs, [&](std::size_t k) {
    Cell& cell = cells[k];
    cell.z = grid_point(k / zps.size());
    cell.zp = zps[k % zps.size()];
    try {
      cell.amplitude = wkb_amplitude(cell.z, cell.zp, c.m, order);
    } catch (const CausticError&) {
      cell.amplitude.reset();
    }
  });

  CsvTable table(header(columns("z", n), columns("zp", n), "t", "re", "im", "a0", "caustic_flag"));
  double free_err = 0.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const Cell& cell : cells)
    for (double t : times) {
      std::vector<double> row;
      append(row, cell.z);
      append(row, cell.zp);
      row.push_back(t);
      if (cell.amplitude) {
        const Complex v = wkb_kernel_value(*cell.amplitude, t, n, order);
        row.insert(row.end(), {v.real(), v.imag(), cell.amplitude->a0, 0.0});
        if (c.flat()) free_err = std::max(free_err, std::abs(v - free_propagator(cell.z, cell.zp, t)));
      } else {
        row.insert(row.end(), {nan, nan, nan, 1.0});
      }
      table.add_row(row);
    }
  c.csv("propagator.csv", table);
  c.plot("propagator.gp", {"WKB kernel", "propagator.csv", "z_1", "value", 1,
                           {2 * n + 2, 2 * n + 3}, {"re", "im"}, true});
  if (c.flat()) c.check("free_kernel", free_err);
}

void run_legendrian(Context& c) {
  Block p(c.s.parameters, "parameters");
  const int n = c.m.n;
  const double l0 = c.s.lambda0;
  const auto seeds = read_points(p.raw("seeds"), "parameters.seeds", n);
  const auto grid = read_grid(p.raw("grid"), "parameters.grid");
  const auto ratio_grid = p.has("ratio_grid") ? read_grid(p.raw("ratio_grid"), "parameters.ratio_grid")
                                              : std::vector<std::pair<double, double>>{{1e3, 2e3}};
  std::optional<std::tuple<Vec, Vec, double>> leaf;
  if (p.has("leaf")) {
    Block b(p.raw("leaf"), "parameters.leaf");
    leaf.emplace(b.vec("y0", n), b.vec("mu", n), b.number("x0", 1e-3));
    b.finish();
  }
  std::vector<std::pair<Vec, Vec>> phase_pairs;
  if (p.has("phase_pairs")) {
    const Json& j = p.raw("phase_pairs");
    if (!j.is_array()) throw SchemaError("parameters.phase_pairs: expected an array");
    for (std::size_t i = 0; i < j.size(); ++i) {
      Block b(j[i], "parameters.phase_pairs[" + std::to_string(i) + "]");
      phase_pairs.emplace_back(b.vec("z", n), b.vec("zp", n));
      b.finish();
    }
  }
  const bool eikonal = p.boolean("eikonal", c.m.label != "inverse-square");
  p.finish();

  const FlowoutSet set = sample_flowout(c.m, l0, seeds, grid);
  FlowoutOptions far;
  far.tangents = false;
  const FlowoutSet ratio_set = sample_flowout(c.m, l0, seeds, ratio_grid, far);

  CsvTable table(header("seed", "s", "s_prime", columns("z1", n), columns("zeta1", n),
                        columns("z2", n), columns("zeta2", n), "theta", "residual1", "residual2"));
  double characteristic = 0.0;
  for (const FlowoutSet* fs : {&set, &ratio_set})
    for (std::size_t k = 0; k < fs->samples.size(); ++k) {
      const FlowoutSample& s = fs->samples[k];
      std::vector<double> row{static_cast<double>(k), s.s, s.s_prime};
      append(row, s.q1.z);
      append(row, s.q1.zeta);
      append(row, s.q2.z);
      append(row, s.q2.zeta);
      row.insert(row.end(), {s.theta, s.residual1, s.residual2});
      table.add_row(row);
      characteristic = std::max({characteristic, s.residual1, s.residual2});
    }
  c.csv("legendrian_samples.csv", table);

  Json report;
  report["samples"] = set.samples.size() + ratio_set.samples.size();
  report["skipped_seeds"] = set.skipped;
  c.check("characteristic", characteristic);

  const LagrangianReport lag = check_lagrangian(set.samples);
  report["lagrangian"] = {{"max_residual", lag.max_residual}, {"pairs", lag.pairs}, {"degenerate", lag.degenerate}};
  c.check("lagrangian", lag.max_residual);

  const RatioReport ratio = check_boundary_ratio(ratio_set.samples, c.m, 1e3, c.tol.at("ratio"));
  report["ratio"] = {{"max_defect", ratio.max_defect}, {"used", ratio.used},
                     {"excluded_small_mu", ratio.excluded_small_mu}, {"excluded_near", ratio.excluded_near}};
  if (ratio.decay_rate) report["ratio"]["decay_rate"] = *ratio.decay_rate;
  if (ratio.used > 0) c.check("ratio", ratio.max_defect);

  if (leaf) {
    const auto& [y0, mu, x0] = *leaf;
    BoundaryLeafOptions lo;
    lo.tolerance = c.tol.at("leaf");
    const BoundaryLeafReport b = check_boundary_leaf(c.m, l0, y0, mu, x0, lo);
    report["leaf"] = {{"max_defect", b.max_defect}, {"energy_defect", b.energy_defect},
                      {"radial_mu", b.radial_mu}, {"s_min", b.s_min}, {"s_max", b.s_max},
                      {"samples", b.samples}};
    c.check("leaf", b.max_defect);
    c.check("leaf_energy", b.energy_defect);
  }
  if (!phase_pairs.empty()) {
    const PhaseMapReport q = check_quadratic_phase_map(c.m, phase_pairs);
    report["phase_map"] = {{"max_identity_defect", q.max_identity_defect},
                           {"max_phase_defect", q.max_phase_defect},
                           {"evaluated", q.evaluated}, {"excluded", q.excluded}};
    if (q.evaluated > 0) c.check("phase_map", std::max(q.max_identity_defect, q.max_phase_defect));
  }
  if (eikonal) {
    const EikonalReport e = check_flowout_eikonal(set.samples, c.m, l0);
    report["eikonal"] = {{"max_defect", e.max_defect}, {"evaluated", e.evaluated}, {"excluded", e.excluded}};
    if (e.evaluated > 0) c.check("eikonal", e.max_defect);
  }
  Json checks = Json::array();
  for (const CheckResult& r : c.result.checks)
    checks.push_back({{"name", r.name}, {"value", r.value}, {"tolerance", r.tolerance}, {"pass", r.pass}});
  report["checks"] = checks;
  c.json("legendrian.json", report);
}

void run_validate(Context& c) {
  Block p(c.s.parameters, "parameters");
  const int n = c.m.n;
  if (c.m.label == "inverse-square") {
    const std::vector<double> impacts = p.numbers("impacts", std::vector<double>{0.5, 1.0, 2.0, 5.0});
    p.finish();
    if (c.m.params.at("eps") != 0.0) throw SchemaError("validate: the closed forms need eps = 0");
    const double cc = c.m.params.at("c"), l0 = c.s.lambda0;
    std::vector<TotalSojourn> runs(impacts.size());
    Vec y_in = Vec::Zero(n), e2 = Vec::Zero(n);
    y_in(0) = 1.0;
    e2(1) = 1.0;
    numerics::parallel_for(impacts.size(), c.jobs, [&](std::size_t k) {
      runs[k] = scatter(y_in, impacts[k] * e2, c.m, l0);
    });
    CsvTable table({"b", "theta", "theta_oracle", "tau", "tau_oracle", "rel_theta", "rel_tau"});
    double worst = 0.0;
    for (std::size_t k = 0; k < impacts.size(); ++k) {
      const double b = impacts[k];
      const double th = inverse_square_deflection(std::abs(b), cc, l0);
      const double ta = inverse_square_sojourn(std::abs(b), cc, l0);
      const double theta = std::abs(runs[k].deflection), tau = runs[k].tau;
      const double rt = std::abs(theta - th) / std::abs(th), rs = std::abs(tau - ta) / std::abs(ta);
      worst = std::max({worst, rt, rs});
      table.add_row({b, theta, th, tau, ta, rt, rs});
    }
    c.csv("validate.csv", table);
    c.plot("validate.gp", {"deflection against the closed form", "validate.csv", "b", "angle", 1,
                           {2, 3}, {"pipeline", "closed form"}, true});
    c.check("relative", worst);
  } else if (c.flat()) {
    const long long count = p.integer("count", 100);
    const double radius = p.number("radius", 5.0);
    p.finish();
    if (count <= 0 || !(radius > 0.0)) throw SchemaError("parameters: need count > 0 and radius > 0");
    RandomSource rs(c.s.seed);
    std::vector<PhasePoint> pts;
    for (long long i = 0; i < count; ++i) {
      Vec z = rs.in_ball(n, radius);
      pts.push_back({z, c.s.lambda0 * rs.direction(n), {}});
    }
    Context sc = c;
    sc.tol["extrapolation"] = 1e-5;
    const auto rows = compute_sojourn(sc, pts);
    CsvTable table({"point", "nu", "nu_oracle", "nu_error", "M_error"});
    double nu_err = 0.0, m_err = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto [nu, M] = flat_sojourn(rows[k].start, c.s.lambda0);
      const double en = std::abs(rows[k].datum.nu - nu), em = (rows[k].datum.M - M).norm();
      nu_err = std::max(nu_err, en);
      m_err = std::max(m_err, em);
      table.add_row({static_cast<double>(k), rows[k].datum.nu, nu, en, em});
    }
    c.csv("validate.csv", table);
    c.plot("validate.gp", {"sojourn against the closed form", "validate.csv", "point", "nu", 1,
                           {2, 3}, {"pipeline", "closed form"}, true});
    c.check("flat_nu", nu_err);
    c.check("flat_M", m_err);
  } else {
    throw SchemaError("validate: no closed-form oracle for model '" + c.m.label + "'");
  }
  Json checks = Json::array();
  bool pass = true;
  for (const CheckResult& r : c.result.checks) {
    checks.push_back({{"name", r.name}, {"value", r.value}, {"tolerance", r.tolerance}, {"pass", r.pass}});
    pass = pass && r.pass;
  }
  c.json("validate.json", {{"model", c.m.label}, {"pass", pass}, {"checks", checks}});
}

void run_trapping(Context& c) {
  Block p(c.s.parameters, "parameters");
  TrappingOptions o;
  o.seed_count = static_cast<std::size_t>(p.integer("seed_count", 1000));
  o.seed_radius = p.number("seed_radius", 3.0);
  o.flow.s_max = p.number("s_max", 1e4);
  o.flow.escape_radius = p.number("escape_radius", 1e3);
  const bool refine = p.boolean("refine", true);
  p.finish();
  o.seed = c.s.seed;
  o.jobs = c.jobs;
  const int n = c.m.n;
  const double l0 = c.s.lambda0;
  const TrappingReport r = detect_trapping(c.m, l0, o);

  CsvTable table(header("seed", columns("z", n), columns("zeta", n), "forward_escaped",
                        "backward_escaped", "trapped", "max_radius"));
  for (std::size_t k = 0; k < r.seeds.size(); ++k) {
    const SeedClassification& s = r.seeds[k];
    std::vector<double> row{static_cast<double>(k)};
    append(row, s.z);
    append(row, s.zeta);
    row.insert(row.end(), {s.forward_escaped ? 1.0 : 0.0, s.backward_escaped ? 1.0 : 0.0,
                           s.trapped ? 1.0 : 0.0, s.max_radius});
    table.add_row(row);
  }
  c.csv("trapping.csv", table);
  c.plot("trapping.gp", {"trapped seeds", "trapping.csv", "z_1", "z_2", 2, {3}, {"seeds"}, true});

  Json report{{"seeds", r.seeds.size()}, {"trapped", r.trapped_count}, {"skipped", r.skipped}};
  if (c.m.rotationally_symmetric()) {
    const TrappingOracle oracle = effective_potential_trapping(c.m, l0);
    report["oracle"] = {{"trapping", oracle.trapping}, {"inner_radius", oracle.inner_radius},
                        {"outer_radius", oracle.outer_radius}};
    const std::size_t classified = r.seeds.size() - r.skipped;
    if (!oracle.trapping && classified > 0)
      c.check("trapped_fraction", static_cast<double>(r.trapped_count) / classified);
    if (oracle.trapping && refine && r.trapped_count > 0) {
      const auto it = std::find_if(r.seeds.begin(), r.seeds.end(),
                                   [](const SeedClassification& s) { return s.trapped; });
      const TrappedRadiusEstimate est = refine_trapped_radius(c.m, l0, it->z, it->zeta);
      report["flow_radius"] = est.radius;
      c.check("trapped_radius", std::abs(est.radius - oracle.outer_radius) / oracle.outer_radius);
    }
  }
  c.json("trapping.json", report);
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

const std::vector<std::string>& scenario_commands() {
  static const std::vector<std::string> commands{"trace", "sojourn", "smatrix", "propagator",
                                                 "legendrian", "validate", "trapping"};
  return commands;
}

std::map<std::string, double> default_tolerances(const std::string& command) {
  const auto& table = tolerance_table();
  const auto it = table.find(command);
  if (it == table.end()) throw SchemaError("unknown command '" + command + "'");
  return it->second;
}

Scenario parse_scenario(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw SchemaError("malformed JSON at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  Block top(j, "scenario");
  Scenario s;
  {
    Block m(top.raw("manifold"), "manifold");
    s.model = m.string("model");
    s.n = static_cast<int>(m.integer("n", 2));
    if (m.has("params")) {
      const Json& params = m.raw("params");
      if (!params.is_object()) throw SchemaError("manifold.params: expected an object");
      for (const auto& [key, value] : params.items()) {
        if (!value.is_number()) throw SchemaError("manifold.params." + key + ": expected a number");
        s.params[key] = value.get<double>();
      }
    }
    m.finish();
  }
  s.command = top.string("command");
  const auto defaults = default_tolerances(s.command);
  s.lambda0 = top.number("lambda0", 1.0);
  if (!(s.lambda0 > 0.0)) throw SchemaError("scenario.lambda0: must be positive");
  if (top.has("parameters")) {
    s.parameters = top.raw("parameters");
    if (!s.parameters.is_object()) throw SchemaError("scenario.parameters: expected an object");
  }
  s.output_dir = top.string("output", "out");
  const long long seed = top.integer("seed", 0);
  if (seed < 0) throw SchemaError("scenario.seed: must be nonnegative");
  s.seed = static_cast<std::uint64_t>(seed);
  const long long jobs = top.integer("jobs", 0);
  if (jobs < 0) throw SchemaError("scenario.jobs: must be nonnegative");
  s.jobs = static_cast<unsigned>(jobs);
  if (top.has("tolerances")) apply_tolerance_overrides(s, top.raw("tolerances").dump());
  top.finish();
  (void)defaults;
  return s;
}

void apply_tolerance_overrides(Scenario& s, const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw SchemaError("malformed tolerance JSON at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  if (!j.is_object()) throw SchemaError("tolerances: expected an object");
  const auto defaults = default_tolerances(s.command);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.count(key))
      throw SchemaError("tolerances: unknown tolerance '" + key + "' for command '" + s.command + "'");
    if (!value.is_number() || !(value.get<double>() >= 0.0))
      throw SchemaError("tolerances." + key + ": expected a nonnegative number");
    s.tolerances[key] = value.get<double>();
  }
}

RunResult execute_scenario(const Scenario& s) {
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  const std::filesystem::path out(s.output_dir);
  std::map<std::string, double> tol;
  unsigned jobs = s.jobs ? s.jobs : numerics::default_jobs();
  std::string status = "ok";
  try {
    tol = default_tolerances(s.command);
    for (const auto& [k, v] : s.tolerances) {
      if (!tol.count(k)) throw SchemaError("unknown tolerance '" + k + "'");
      tol[k] = v;
    }
    std::filesystem::create_directories(out);
    ManifoldModel m;
    try {
      m = build_manifold(s.model, s.n, s.params);
    } catch (const ModelError& e) {
      throw SchemaError(std::string("manifold: ") + e.what());
    }
    Context c{s, std::move(m), out, jobs, tol, result};
    if (s.command == "trace") run_trace(c);
    else if (s.command == "sojourn") run_sojourn(c);
    else if (s.command == "smatrix") run_smatrix(c);
    else if (s.command == "propagator") run_propagator(c);
    else if (s.command == "legendrian") run_legendrian(c);
    else if (s.command == "validate") run_validate(c);
    else run_trapping(c);
    for (const CheckResult& r : result.checks)
      if (!r.pass) {
        result.exit_code = kExitTolerance;
        status = "tolerance_failure";
        result.message += (result.message.empty() ? "" : "; ") + r.name + " = " +
                          format_double(r.value) + " exceeds " + format_double(r.tolerance);
      }
  } catch (const SchemaError& e) {
    result.exit_code = kExitSchema;
    status = "schema_error";
    result.message = e.what();
  } catch (const Error& e) {
    result.exit_code = kExitNumerical;
    status = "numerical_failure";
    result.message = e.what();
  } catch (const std::filesystem::filesystem_error& e) {
    result.exit_code = kExitNumerical;
    status = "io_failure";
    result.message = e.what();
  }

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Json params = Json::object();
  for (const auto& [k, v] : s.params) params[k] = v;
  Json checks = Json::array();
  for (const CheckResult& r : result.checks)
    checks.push_back({{"name", r.name}, {"value", r.value}, {"tolerance", r.tolerance}, {"pass", r.pass}});
  Json manifest{{"tool", "conic"},
                {"version", kToolVersion},
                {"command", s.command},
                {"manifold", {{"model", s.model}, {"n", s.n}, {"params", params}}},
                {"lambda0", s.lambda0},
                {"seed", s.seed},
                {"jobs", jobs},
                {"tolerances", tol},
                {"checks", checks},
                {"files", result.files},
                {"status", status},
                {"exit_code", result.exit_code},
                {"message", result.message},
                {"timings", {{"total_seconds", seconds}}}};
  try {
    std::filesystem::create_directories(out);
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    if (result.exit_code == kExitOk) {
      result.exit_code = kExitNumerical;
      result.message = e.what();
    }
  }
  return result;
}

}  // namespace conic
