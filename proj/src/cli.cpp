#include "qp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qp/csv.hpp"
#include "qp/graph.hpp"

namespace fs = std::filesystem;

namespace qp {

const char* to_string(Command c) {
  switch (c) {
    case Command::Equilibria: return "equilibria";
    case Command::Quasipotential: return "quasipotential";
    case Command::Hjb: return "hjb";
    case Command::Simulate: return "simulate";
    case Command::Compare: return "compare";
    case Command::Multiwell: return "multiwell";
  }
  return "?";
}

ConfigError::ConfigError(std::vector<std::string> issues_)
    : std::runtime_error(issues_.empty() ? "invalid config"
                                         : "invalid config: " + issues_.front() +
                                               (issues_.size() > 1 ? " (+more)" : "")),
      issues(std::move(issues_)) {}

namespace {

using nlohmann::json;

// ---- strict JSON reading -------------------------------------------------

void reject_unknown(const json& j, const std::vector<std::string>& allowed,
                    const std::string& path, std::vector<std::string>& issues) {
  if (!j.is_object()) {
    issues.push_back(path + ": expected an object");
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      issues.push_back(path + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& path,
                std::vector<std::string>& issues) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception& e) {
    issues.push_back(path + "." + key + ": " + e.what());
  }
}

std::optional<Vector> read_point(const json& j, const std::string& path,
                                 std::vector<std::string>& issues) {
  if (!j.is_array() || j.empty()) {
    issues.push_back(path + ": expected a nonempty numeric array");
    return std::nullopt;
  }
  Vector v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      issues.push_back(path + ": expected numbers");
      return std::nullopt;
    }
    v[static_cast<int>(i)] = j[i].get<double>();
  }
  return v;
}

std::vector<Vector> read_points(const json& j, const std::string& path,
                                std::vector<std::string>& issues) {
  std::vector<Vector> out;
  if (!j.is_array()) {
    issues.push_back(path + ": expected an array of points");
    return out;
  }
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto p = read_point(j[i], path + "[" + std::to_string(i) + "]", issues);
    if (p) out.push_back(std::move(*p));
  }
  return out;
}

json point_to_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// ---- fixed-width stdout table --------------------------------------------

void print_table(const std::vector<std::string>& headers,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) w[c] = headers[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < w.size(); ++c)
      w[c] = std::max(w[c], r[c].size());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c)
      std::printf("%-*s%s", static_cast<int>(w[c]), cells[c].c_str(),
                  c + 1 == cells.size() ? "\n" : "  ");
  };
  line(headers);
  for (const auto& r : rows) line(r);
}

std::string fmt_g(double v, int prec = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// ---- artifact writing ------------------------------------------------------

class ArtifactSet {
 public:
  explicit ArtifactSet(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, const std::string& bytes) {
    write_file((dir_ / name).string(), bytes);
    entries_.push_back({name, bytes.size(), fnv1a64_hex(bytes)});
  }

  void add_json(const std::string& name, const json& j) { add(name, j.dump(2) + "\n"); }

  void finish(Command cmd, const json& config_echo, const std::vector<std::string>& flags,
              bool failed) {
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) { return a.name < b.name; });
    json files = json::array();
    for (const auto& e : entries_)
      files.push_back({{"path", e.name}, {"bytes", e.bytes}, {"fnv1a64", e.checksum}});
    json manifest{{"command", to_string(cmd)},
                  {"status", failed ? "FAILED" : "OK"},
                  {"flags", flags},
                  {"files", files},
                  {"config", config_echo}};
    write_file((dir_ / "manifest.json").string(), manifest.dump(2) + "\n");
  }

 private:
  struct Entry {
    std::string name;
    std::size_t bytes;
    std::string checksum;
  };
  fs::path dir_;
  std::vector<Entry> entries_;
};

// ---- shared command helpers ------------------------------------------------

json equilibrium_to_json(const Equilibrium& e) {
  json eig = json::array();
  for (int i = 0; i < e.jacobian_eig_real.size(); ++i) eig.push_back(e.jacobian_eig_real[i]);
  return json{{"location", point_to_json(e.location)},
              {"kind", to_string(e.kind)},
              {"eig_real", eig},
              {"residual", e.residual}};
}

std::vector<int> stable_indices(const std::vector<Equilibrium>& eqs) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(eqs.size()); ++i)
    if (eqs[static_cast<std::size_t>(i)].kind == EquilibriumKind::Stable) out.push_back(i);
  return out;
}

// W_i for every equilibrium: zero for a single equilibrium, otherwise the
// multi-well graph calculus over the pairwise cost matrix.
struct MultiwellData {
  std::vector<Equilibrium> eqs;
  std::vector<double> W;            // per equilibrium
  std::optional<PairCostResult> pair;
  std::optional<GraphResult> graph;
};

MultiwellData multiwell_potentials(const SystemSpec& sys, const ExperimentConfig& cfg,
                                   std::vector<std::string>& flags) {
  MultiwellData d;
  d.eqs = find_equilibria(sys, cfg.equilibria.n_starts, cfg.equilibria.tol);
  if (d.eqs.empty()) throw std::runtime_error("no equilibria found in the domain box");
  d.W.assign(d.eqs.size(), 0.0);
  if (d.eqs.size() == 1) return d;
  d.pair = pair_cost_matrix(sys, d.eqs, cfg.mam.opts);
  if (d.pair->provisional) flags.push_back("cost matrix provisional: entry not converged");
  d.graph = equilibrium_potentials(d.pair->costs);
  if (!d.graph->all_reachable) flags.push_back("graph: some equilibrium unreachable");
  for (std::size_t i = 0; i < d.eqs.size(); ++i)
    d.W[i] = d.graph->W[i].value_or(0.0);
  return d;
}

std::string csv_opt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

// ---- commands ---------------------------------------------------------------

int cmd_equilibria(const SystemSpec& sys, const ExperimentConfig& cfg, ArtifactSet& art,
                   std::vector<std::string>&) {
  auto eqs = find_equilibria(sys, cfg.equilibria.n_starts, cfg.equilibria.tol);
  auto rep = check_assumptions(sys, cfg.equilibria.alpha, cfg.equilibria.beta,
                               cfg.equilibria.n_samples, cfg.seed);

  json je = json::array();
  for (const auto& e : eqs) je.push_back(equilibrium_to_json(e));
  art.add_json("equilibria.json",
               json{{"count", eqs.size()}, {"equilibria", je}});
  json radial = json::array();
  for (const auto& r : rep.radial)
    radial.push_back({{"radius", r.radius}, {"margin", r.margin}});
  art.add_json("assumptions.json", json{{"lambda_hat", rep.lambda_hat},
                                        {"Lambda_hat", rep.Lambda_hat},
                                        {"radial", radial},
                                        {"ellipticity_ok", rep.ellipticity_ok},
                                        {"radial_ok", rep.radial_ok},
                                        {"box_only", rep.box_only},
                                        {"alpha", cfg.equilibria.alpha},
                                        {"beta", cfg.equilibria.beta}});

  if (eqs.empty()) std::printf("no equilibria found inside the domain box\n");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < eqs.size(); ++i) {
    std::ostringstream loc;
    for (int k = 0; k < eqs[i].location.size(); ++k)
      loc << (k ? "," : "") << fmt_g(eqs[i].location[k]);
    rows.push_back({std::to_string(i), loc.str(), to_string(eqs[i].kind),
                    fmt_g(eqs[i].residual, 3)});
  }
  print_table({"index", "location", "kind", "residual"}, rows);
  return 0;
}

int cmd_quasipotential(const SystemSpec& sys, const ExperimentConfig& cfg, ArtifactSet& art,
                       std::vector<std::string>& flags) {
  Vector from;
  if (cfg.mam.from) {
    from = *cfg.mam.from;
  } else {
    auto eqs = find_equilibria(sys, cfg.equilibria.n_starts, cfg.equilibria.tol);
    const auto stable = stable_indices(eqs);
    if (stable.empty()) throw std::runtime_error("no stable equilibrium to start from");
    from = eqs[static_cast<std::size_t>(stable.front())].location;
  }
  if (!cfg.mam.to && cfg.mam.targets.empty())
    throw std::runtime_error("quasipotential: mam.to (or mam.targets) is required");

  int rc = 0;
  if (cfg.mam.to) {
    auto res = quasipotential(sys, from, *cfg.mam.to, cfg.mam.opts);
    if (!res.converged) {
      flags.push_back("quasipotential: optimizer did not converge");
      rc = 3;
    }
    if (res.horizon_limited) {
      flags.push_back("quasipotential: horizon-limited (ladder still improving)");
      rc = 3;
    }
    std::ostringstream path_csv;
    write_path_csv(path_csv, res.path);
    art.add("path.csv", path_csv.str());
    art.add_json("result.json", json{{"value", res.value},
                                     {"best_T", res.best_T},
                                     {"converged", res.converged},
                                     {"horizon_limited", res.horizon_limited},
                                     {"iterations", res.iterations},
                                     {"grad_norm", res.grad_norm},
                                     {"warnings", res.warnings},
                                     {"from", point_to_json(from)},
                                     {"to", point_to_json(*cfg.mam.to)}});
    print_table({"value", "best_T", "converged", "grad_norm"},
                {{fmt_g(res.value), fmt_g(res.best_T), res.converged ? "yes" : "no",
                  fmt_g(res.grad_norm, 3)}});
  }
  if (!cfg.mam.targets.empty()) {
    auto field = quasipotential_field(sys, from, cfg.mam.targets, cfg.mam.opts);
    json jt = json::array();
    for (const auto& [pt, res] : field) {
      if (!res.converged) {
        flags.push_back("quasipotential_field: a target did not converge");
        rc = 3;
      }
      jt.push_back({{"point", point_to_json(pt)},
                    {"value", res.value},
                    {"best_T", res.best_T},
                    {"converged", res.converged}});
    }
    art.add_json("field.json", json{{"from", point_to_json(from)}, {"targets", jt}});
  }
  return rc;
}

int cmd_hjb(const SystemSpec& sys, const ExperimentConfig& cfg, ArtifactSet& art,
            std::vector<std::string>& flags) {
  HjbGrid grid = HjbGrid::regular(sys.box(), cfg.grid.h);
  std::vector<Vector> sources;
  if (cfg.grid.sources) {
    sources = *cfg.grid.sources;
  } else {
    auto eqs = find_equilibria(sys, cfg.equilibria.n_starts, cfg.equilibria.tol);
    for (int i : stable_indices(eqs)) sources.push_back(eqs[static_cast<std::size_t>(i)].location);
    if (sources.empty()) throw std::runtime_error("no stable equilibrium for hjb sources");
  }
  std::vector<double> values(sources.size(), 0.0);
  if (cfg.grid.source_values) {
    if (cfg.grid.source_values->size() != sources.size())
      throw std::runtime_error("grid.source_values must match the source count");
    values = *cfg.grid.source_values;
  }
  for (std::size_t i = 0; i < sources.size(); ++i) grid.add_source(sources[i], values[i]);

  auto sol = sweep_solve(sys, grid, cfg.grid.tol, cfg.grid.max_sweeps);
  const double res_max = residual(sys, sol);
  if (!sol.converged) {
    flags.push_back("hjb: sweeping did not converge");
  }

  std::ostringstream csv;
  write_solution_csv(csv, sol);
  art.add("solution.csv", csv.str());
  json jsrc = json::array();
  for (std::size_t i = 0; i < sources.size(); ++i)
    jsrc.push_back({{"point", point_to_json(sources[i])}, {"value", values[i]}});
  art.add_json("solution.json",
               json{{"sweeps", sol.sweeps},
                    {"max_delta", sol.max_delta},
                    {"converged", sol.converged},
                    {"residual", res_max},
                    {"unreached", sol.unreached},
                    {"h", {grid.h[0], grid.h[1]}},
                    {"nodes", {grid.n[0], grid.n[1]}},
                    {"sources", jsrc}});
  print_table({"nodes", "sweeps", "max_delta", "residual", "converged"},
              {{std::to_string(sol.grid.nodes()), std::to_string(sol.sweeps),
                fmt_g(sol.max_delta, 3), fmt_g(res_max, 3), sol.converged ? "yes" : "no"}});
  return sol.converged ? 0 : 3;
}

void write_histogram_csv(ArtifactSet& art, const WField& wf) {
  const DensityEstimate& est = wf.geometry;
  std::ostringstream os;
  os << (est.dim == 1 ? "x1,count,density,W" : "x1,x2,count,density,W") << "\n";
  for (int b = 0; b < est.flat_bins(); ++b) {
    const Vector c = est.bin_center(b);
    for (int i = 0; i < est.dim; ++i) os << format_double(c[i]) << ',';
    os << est.counts[static_cast<std::size_t>(b)] << ',' << format_double(est.density(b))
       << ',' << csv_opt(wf.W[static_cast<std::size_t>(b)]) << "\n";
  }
  art.add("histogram.csv", os.str());
}

int cmd_simulate(const SystemSpec& sys, const ExperimentConfig& cfg, ArtifactSet& art,
                 std::vector<std::string>& flags) {
  SimOptions opts = cfg.sim.opts;
  opts.seed = cfg.seed;
  auto est = estimate_invariant_density(sys, opts, cfg.sim.bins);
  auto wf = log_transform(est);
  write_histogram_csv(art, wf);

  int rc = 0;
  if (est.report.aborted) {
    flags.push_back("simulate: non-finite state at step " +
                    std::to_string(est.report.abort_step));
    rc = 3;
  }
  if (!est.reliable()) {
    flags.push_back("simulate: density unreliable (escape fraction " +
                    fmt_g(est.escape_fraction(), 3) + " > 5%)");
    rc = 3;
  }
  if (est.report.dt_warning) flags.push_back("simulate: dt stability warning");

  // binned moments
  json mean = json::array(), var = json::array();
  for (int axis = 0; axis < est.dim; ++axis) {
    double m = 0.0, tot = 0.0;
    for (int b = 0; b < est.flat_bins(); ++b) {
      m += est.bin_center(b)[axis] * static_cast<double>(est.counts[static_cast<std::size_t>(b)]);
      tot += static_cast<double>(est.counts[static_cast<std::size_t>(b)]);
    }
    m = tot > 0 ? m / tot : 0.0;
    double v = 0.0;
    for (int b = 0; b < est.flat_bins(); ++b) {
      const double dxc = est.bin_center(b)[axis] - m;
      v += dxc * dxc * static_cast<double>(est.counts[static_cast<std::size_t>(b)]);
    }
    mean.push_back(m);
    var.push_back(tot > 0 ? v / tot : 0.0);
  }

  json stationarity = json::object();
  if (cfg.sim.stationarity) {
    for (const auto& [label, field] :
         std::vector<std::pair<std::string, ScalarField>>{
             {"norm2", ScalarField::norm2()}, {"gauss", ScalarField::gaussian_bump()}}) {
      auto g = generator_average(sys, opts, field);
      stationarity[label] = {{"mean", g.mean}, {"se", g.se}, {"samples", g.samples},
                             {"within_3se", std::abs(g.mean) <= 3.0 * g.se}};
    }
  }

  art.add_json("stats.json", json{{"retained", est.total_retained},
                                  {"escaped", est.escaped},
                                  {"escape_fraction", est.escape_fraction()},
                                  {"reliable", est.reliable()},
                                  {"aborted", est.report.aborted},
                                  {"dt_warning", est.report.dt_warning},
                                  {"eps", opts.eps},
                                  {"dt", opts.dt},
                                  {"steps", opts.steps},
                                  {"seed", opts.seed},
                                  {"bins", cfg.sim.bins},
                                  {"mean", mean},
                                  {"variance", var},
                                  {"stationarity", stationarity}});

  if (cfg.sim.balls) {
    std::vector<Vector> centers;
    if (cfg.sim.ball_centers) {
      centers = *cfg.sim.ball_centers;
    } else {
      auto eqs = find_equilibria(sys, cfg.equilibria.n_starts, cfg.equilibria.tol);
      for (int i : stable_indices(eqs))
        centers.push_back(eqs[static_cast<std::size_t>(i)].location);
    }
    auto balls = ball_measure(sys, opts, centers, cfg.sim.rho);
    json jb = json::array();
    for (const auto& b : balls) {
      json e{{"center", point_to_json(b.center)},
             {"count", b.count},
             {"fraction", b.fraction},
             {"lower_bound", b.lower_bound}};
      if (b.exponent) e["exponent"] = *b.exponent;
      else e["exponent_bound"] = b.exponent_bound;
      jb.push_back(std::move(e));
    }
    art.add_json("balls.json", json{{"rho", cfg.sim.rho}, {"balls", jb}});
  }

  if (cfg.sim.hitting) {
    if (!cfg.sim.hit_start || cfg.sim.hit_targets.empty())
      throw std::runtime_error("simulate: hitting requires hit_start and hit_targets");
    auto st = hitting_time_stats(sys, opts, *cfg.sim.hit_start, cfg.sim.hit_targets,
                                 cfg.sim.hit_runs, cfg.sim.hit_cap);
    if (st.all_censored) {
      flags.push_back("hitting: all runs censored");
      rc = 3;
    }
    art.add_json("hitting.json", json{{"runs", st.runs},
                                      {"censored", st.censored},
                                      {"all_censored", st.all_censored},
                                      {"mean", st.mean},
                                      {"stddev", st.stddev},
                                      {"max", st.tmax},
                                      {"times", st.times}});
  }

  print_table({"retained", "escape_frac", "reliable"},
              {{std::to_string(est.total_retained), fmt_g(est.escape_fraction(), 3),
                est.reliable() ? "yes" : "no"}});
  return rc;
}

int cmd_compare(const SystemSpec& sys, const ExperimentConfig& cfg, ArtifactSet& art,
                std::vector<std::string>& flags) {
  int rc = 0;
  MultiwellData mw = multiwell_potentials(sys, cfg, flags);
  const auto stable = stable_indices(mw.eqs);
  if (stable.empty()) throw std::runtime_error("compare: no stable equilibrium");
  if (!flags.empty()) rc = 3;

  // probes: inner half of the box along each axis (diagonal in 2D)
  std::vector<Vector> probes = cfg.compare.probes;
  if (probes.empty()) {
    const int n = cfg.compare.probe_count;
    for (int k = 0; k < n; ++k) {
      Vector p(sys.dim());
      for (int axis = 0; axis < sys.dim(); ++axis) {
        const double lo = sys.box().lo(axis) + 0.25 * sys.box().width(axis);
        const double hi = sys.box().hi(axis) - 0.25 * sys.box().width(axis);
        p[axis] = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * k / (n - 1.0);
      }
      probes.push_back(std::move(p));
    }
  }

  // path-space route
  std::vector<double> w_mam(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::vector<AssembleBranch> detail;
    w_mam[i] = assemble_global_W(sys, mw.eqs, mw.W, probes[i], cfg.mam.opts, &detail);
    for (const auto& b : detail)
      if (!b.converged) {
        flags.push_back("compare: assembly branch did not converge");
        rc = 3;
      }
  }

  // grid route (sources pinned at the graph potentials)
  HjbGrid grid = HjbGrid::regular(sys.box(), cfg.grid.h);
  for (int i : stable)
    grid.add_source(mw.eqs[static_cast<std::size_t>(i)].location,
                    mw.W[static_cast<std::size_t>(i)]);
  auto sol = sweep_solve(sys, grid, cfg.grid.tol, cfg.grid.max_sweeps);
  if (!sol.converged) {
    flags.push_back("compare: hjb sweeping did not converge");
    rc = 3;
  }

  // Monte Carlo route
  SimOptions sopts = cfg.sim.opts;
  sopts.seed = cfg.seed;
  auto est = estimate_invariant_density(sys, sopts, cfg.sim.bins);
  if (!est.reliable()) {
    flags.push_back("compare: density unreliable");
    rc = 3;
  }
  auto wf = log_transform(est);
  auto mc_at = [&](const Vector& x) -> std::optional<double> {
    if (!est.box.contains(x)) return std::nullopt;
    int flat = 0;
    {
      int i = static_cast<int>((x[0] - est.box.lo(0)) / est.box.width(0) * est.bins[0]);
      i = std::clamp(i, 0, est.bins[0] - 1);
      flat = i;
      if (est.dim == 2) {
        int j = static_cast<int>((x[1] - est.box.lo(1)) / est.box.width(1) * est.bins[1]);
        j = std::clamp(j, 0, est.bins[1] - 1);
        flat = j * est.bins[0] + i;
      }
    }
    return wf.W[static_cast<std::size_t>(flat)];
  };

  std::ostringstream csv;
  for (int i = 0; i < sys.dim(); ++i) csv << "x" << (i + 1) << ',';
  csv << "W_mam,W_hjb,W_mc\n";
  double max_mam_hjb = 0.0, max_mam_mc = 0.0;
  int mc_missing = 0;
  json rows = json::array();
  std::vector<std::vector<std::string>> trows;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double wh = sol.value_at(probes[i]);
    const auto wmc = mc_at(probes[i]);
    if (!wmc) ++mc_missing;
    for (int k = 0; k < sys.dim(); ++k) csv << format_double(probes[i][k]) << ',';
    csv << format_double(w_mam[i]) << ',' << format_double(wh) << ',' << csv_opt(wmc)
        << "\n";
    if (std::isfinite(wh)) max_mam_hjb = std::max(max_mam_hjb, std::abs(w_mam[i] - wh));
    if (wmc) max_mam_mc = std::max(max_mam_mc, std::abs(w_mam[i] - *wmc));
    json row{{"x", point_to_json(probes[i])}, {"w_mam", w_mam[i]}, {"w_hjb", wh}};
    row["w_mc"] = wmc ? json(*wmc) : json(nullptr);
    rows.push_back(std::move(row));
    std::ostringstream xs;
    for (int k = 0; k < sys.dim(); ++k) xs << (k ? "," : "") << fmt_g(probes[i][k], 4);
    trows.push_back({xs.str(), fmt_g(w_mam[i]), fmt_g(wh),
                     wmc ? fmt_g(*wmc) : std::string("-")});
  }
  art.add("compare.csv", csv.str());
  art.add_json("compare.json", json{{"rows", rows},
                                    {"max_abs_mam_hjb", max_mam_hjb},
                                    {"max_abs_mam_mc", max_mam_mc},
                                    {"mc_bins_missing", mc_missing}});
  print_table({"x", "W_mam", "W_hjb", "W_mc"}, trows);
  std::printf("max |W_mam - W_hjb| = %s   max |W_mam - W_mc| = %s (over %d probes, %d MC bins missing)\n",
              fmt_g(max_mam_hjb, 3).c_str(), fmt_g(max_mam_mc, 3).c_str(),
              static_cast<int>(probes.size()), mc_missing);
  return rc;
}

int cmd_multiwell(const SystemSpec& sys, const ExperimentConfig& cfg, ArtifactSet& art,
                  std::vector<std::string>& flags) {
  int rc = 0;
  MultiwellData mw = multiwell_potentials(sys, cfg, flags);
  if (!flags.empty()) rc = 3;
  const int J = static_cast<int>(mw.eqs.size());

  json je = json::array();
  for (const auto& e : mw.eqs) je.push_back(equilibrium_to_json(e));
  art.add_json("equilibria.json", json{{"count", J}, {"equilibria", je}});

  // cost matrix (row = source)
  std::ostringstream csv;
  write_cost_matrix_csv(csv, mw.pair ? mw.pair->costs : CostMatrix::zeros(J));
  art.add("costmatrix.csv", csv.str());

  json jz = json::array(), jw = json::array(), jm = json::array();
  for (int i = 0; i < J; ++i) {
    if (mw.graph) {
      const auto& z = mw.graph->Z[static_cast<std::size_t>(i)];
      jz.push_back(z ? json(*z) : json(nullptr));
      const auto& w = mw.graph->W[static_cast<std::size_t>(i)];
      jw.push_back(w ? json(*w) : json(nullptr));
      jm.push_back(mw.graph->maps[static_cast<std::size_t>(i)]);
    } else {
      jz.push_back(0.0);
      jw.push_back(0.0);
      jm.push_back(std::vector<int>{-1});
    }
  }
  art.add_json("graph.json", json{{"J", J},
                                  {"Z", jz},
                                  {"W", jw},
                                  {"edge_maps", jm},
                                  {"all_reachable", mw.graph ? mw.graph->all_reachable : true}});

  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < J; ++i) {
    std::ostringstream loc;
    for (int k = 0; k < mw.eqs[static_cast<std::size_t>(i)].location.size(); ++k)
      loc << (k ? "," : "") << fmt_g(mw.eqs[static_cast<std::size_t>(i)].location[k], 4);
    rows.push_back({std::to_string(i), loc.str(),
                    to_string(mw.eqs[static_cast<std::size_t>(i)].kind),
                    fmt_g(mw.graph && mw.graph->Z[static_cast<std::size_t>(i)]
                              ? *mw.graph->Z[static_cast<std::size_t>(i)] : 0.0),
                    fmt_g(mw.W[static_cast<std::size_t>(i)])});
  }
  print_table({"index", "location", "kind", "Z", "W"}, rows);

  if (cfg.multiwell.simulate) {
    const auto stable = stable_indices(mw.eqs);
    std::vector<Vector> centers;
    std::vector<double> w_stable;
    for (int i : stable) {
      centers.push_back(mw.eqs[static_cast<std::size_t>(i)].location);
      w_stable.push_back(mw.W[static_cast<std::size_t>(i)]);
    }
    SimOptions sopts = cfg.sim.opts;
    sopts.seed = cfg.seed;
    auto balls = ball_measure(sys, sopts, centers, cfg.multiwell.rho);

    // exponent ordering must match the W_i ordering on the stable set
    bool matches = true;
    for (std::size_t a = 0; a < balls.size(); ++a)
      for (std::size_t b = 0; b < balls.size(); ++b) {
        if (a == b || !(w_stable[a] < w_stable[b])) continue;
        const double ea = balls[a].exponent.value_or(balls[a].exponent_bound);
        const double eb = balls[b].exponent.value_or(balls[b].exponent_bound);
        if (!(ea < eb)) matches = false;
      }
    json jb = json::array();
    for (std::size_t i = 0; i < balls.size(); ++i) {
      json e{{"center", point_to_json(balls[i].center)},
             {"fraction", balls[i].fraction},
             {"count", balls[i].count},
             {"lower_bound", balls[i].lower_bound},
             {"W", w_stable[i]}};
      if (balls[i].exponent) e["exponent"] = *balls[i].exponent;
      else e["exponent_bound"] = balls[i].exponent_bound;
      jb.push_back(std::move(e));
    }
    art.add_json("verdict.json", json{{"exponent_ordering_matches", matches},
                                      {"rho", cfg.multiwell.rho},
                                      {"eps", sopts.eps},
                                      {"balls", jb}});
    std::printf("exponent ordering %s the graph potentials\n",
                matches ? "matches" : "DOES NOT match");
    if (!matches) {
      flags.push_back("multiwell: exponent ordering mismatch");
      rc = 3;
    }
  }
  return rc;
}

}  // namespace

// ---- config parsing ---------------------------------------------------------

ExperimentConfig parse_config_json(const json& j) {
  std::vector<std::string> issues;
  ExperimentConfig cfg;

  reject_unknown(j,
                 {"system", "command", "out", "seed", "overwrite", "equilibria", "mam",
                  "grid", "sim", "compare", "multiwell"},
                 "config", issues);

  if (!j.contains("system")) issues.push_back("config.system: required");
  if (!j.contains("command")) issues.push_back("config.command: required");
  if (!j.contains("out")) issues.push_back("config.out: required");

  if (j.contains("system")) {
    cfg.system_json = j.at("system");
    try {
      cfg.system = SystemSpec::from_json(cfg.system_json);
      cfg.system->validate();
    } catch (const std::exception& e) {
      issues.push_back(std::string("config.system: ") + e.what());
    }
  }
  if (j.contains("command")) {
    const std::string c = j.at("command").is_string() ? j.at("command").get<std::string>() : "";
    if (c == "equilibria") cfg.command = Command::Equilibria;
    else if (c == "quasipotential") cfg.command = Command::Quasipotential;
    else if (c == "hjb") cfg.command = Command::Hjb;
    else if (c == "simulate") cfg.command = Command::Simulate;
    else if (c == "compare") cfg.command = Command::Compare;
    else if (c == "multiwell") cfg.command = Command::Multiwell;
    else issues.push_back("config.command: unknown command '" + c + "'");
  }
  read_field(j, "out", cfg.out, "config", issues);
  read_field(j, "seed", cfg.seed, "config", issues);
  read_field(j, "overwrite", cfg.overwrite, "config", issues);

  if (j.contains("equilibria")) {
    const json& je = j.at("equilibria");
    reject_unknown(je, {"n_starts", "tol", "alpha", "beta", "n_samples"},
                   "config.equilibria", issues);
    read_field(je, "n_starts", cfg.equilibria.n_starts, "config.equilibria", issues);
    read_field(je, "tol", cfg.equilibria.tol, "config.equilibria", issues);
    read_field(je, "alpha", cfg.equilibria.alpha, "config.equilibria", issues);
    read_field(je, "beta", cfg.equilibria.beta, "config.equilibria", issues);
    read_field(je, "n_samples", cfg.equilibria.n_samples, "config.equilibria", issues);
  }

  if (j.contains("mam")) {
    const json& jm = j.at("mam");
    reject_unknown(jm,
                   {"n_nodes", "horizons", "grad_tol", "max_iter", "multi_start", "from",
                    "to", "targets"},
                   "config.mam", issues);
    read_field(jm, "n_nodes", cfg.mam.opts.n_nodes, "config.mam", issues);
    read_field(jm, "horizons", cfg.mam.opts.horizons, "config.mam", issues);
    read_field(jm, "grad_tol", cfg.mam.opts.grad_tol, "config.mam", issues);
    read_field(jm, "max_iter", cfg.mam.opts.max_iter, "config.mam", issues);
    read_field(jm, "multi_start", cfg.mam.opts.multi_start, "config.mam", issues);
    if (jm.contains("from")) cfg.mam.from = read_point(jm.at("from"), "config.mam.from", issues);
    if (jm.contains("to")) cfg.mam.to = read_point(jm.at("to"), "config.mam.to", issues);
    if (jm.contains("targets"))
      cfg.mam.targets = read_points(jm.at("targets"), "config.mam.targets", issues);
    try {
      cfg.mam.opts.validate();
    } catch (const std::exception& e) {
      issues.push_back(std::string("config.mam: ") + e.what());
    }
  }

  if (j.contains("grid")) {
    const json& jg = j.at("grid");
    reject_unknown(jg, {"h", "tol", "max_sweeps", "sources", "source_values"},
                   "config.grid", issues);
    read_field(jg, "h", cfg.grid.h, "config.grid", issues);
    read_field(jg, "tol", cfg.grid.tol, "config.grid", issues);
    read_field(jg, "max_sweeps", cfg.grid.max_sweeps, "config.grid", issues);
    if (jg.contains("sources"))
      cfg.grid.sources = read_points(jg.at("sources"), "config.grid.sources", issues);
    if (jg.contains("source_values")) {
      std::vector<double> v;
      read_field(jg, "source_values", v, "config.grid", issues);
      cfg.grid.source_values = std::move(v);
    }
    if (!(cfg.grid.h > 0.0)) issues.push_back("config.grid.h: must be positive");
  }

  if (j.contains("sim")) {
    const json& js = j.at("sim");
    reject_unknown(js,
                   {"eps", "dt", "steps", "burn_in", "x0", "bins", "stationarity", "balls",
                    "rho", "ball_centers", "hitting", "hit_start", "hit_targets",
                    "hit_runs", "hit_cap"},
                   "config.sim", issues);
    read_field(js, "eps", cfg.sim.opts.eps, "config.sim", issues);
    read_field(js, "dt", cfg.sim.opts.dt, "config.sim", issues);
    read_field(js, "steps", cfg.sim.opts.steps, "config.sim", issues);
    read_field(js, "burn_in", cfg.sim.opts.burn_in, "config.sim", issues);
    if (js.contains("x0")) {
      auto p = read_point(js.at("x0"), "config.sim.x0", issues);
      if (p) cfg.sim.opts.x0 = *p;
    }
    read_field(js, "bins", cfg.sim.bins, "config.sim", issues);
    read_field(js, "stationarity", cfg.sim.stationarity, "config.sim", issues);
    read_field(js, "balls", cfg.sim.balls, "config.sim", issues);
    read_field(js, "rho", cfg.sim.rho, "config.sim", issues);
    if (js.contains("ball_centers"))
      cfg.sim.ball_centers = read_points(js.at("ball_centers"), "config.sim.ball_centers", issues);
    read_field(js, "hitting", cfg.sim.hitting, "config.sim", issues);
    if (js.contains("hit_start"))
      cfg.sim.hit_start = read_point(js.at("hit_start"), "config.sim.hit_start", issues);
    if (js.contains("hit_targets")) {
      const json& jt = js.at("hit_targets");
      if (!jt.is_array()) {
        issues.push_back("config.sim.hit_targets: expected an array");
      } else {
        for (std::size_t i = 0; i < jt.size(); ++i) {
          const json& e = jt[i];
          const std::string p = "config.sim.hit_targets[" + std::to_string(i) + "]";
          reject_unknown(e, {"center", "rho"}, p, issues);
          if (!e.contains("center") || !e.contains("rho")) {
            issues.push_back(p + ": center and rho required");
            continue;
          }
          auto c = read_point(e.at("center"), p + ".center", issues);
          if (c) cfg.sim.hit_targets.emplace_back(*c, e.at("rho").get<double>());
        }
      }
    }
    read_field(js, "hit_runs", cfg.sim.hit_runs, "config.sim", issues);
    read_field(js, "hit_cap", cfg.sim.hit_cap, "config.sim", issues);
    try {
      cfg.sim.opts.validate();
    } catch (const std::exception& e) {
      issues.push_back(std::string("config.sim: ") + e.what());
    }
  }

  if (j.contains("compare")) {
    const json& jc = j.at("compare");
    reject_unknown(jc, {"probes", "probe_count"}, "config.compare", issues);
    if (jc.contains("probes"))
      cfg.compare.probes = read_points(jc.at("probes"), "config.compare.probes", issues);
    read_field(jc, "probe_count", cfg.compare.probe_count, "config.compare", issues);
  }

  if (j.contains("multiwell")) {
    const json& jw = j.at("multiwell");
    reject_unknown(jw, {"simulate", "rho"}, "config.multiwell", issues);
    read_field(jw, "simulate", cfg.multiwell.simulate, "config.multiwell", issues);
    read_field(jw, "rho", cfg.multiwell.rho, "config.multiwell", issues);
  }

  // dimension cross-checks
  if (cfg.system) {
    const int d = cfg.system->dim();
    auto check_dim = [&](const std::optional<Vector>& v, const char* what) {
      if (v && static_cast<int>(v->size()) != d)
        issues.push_back(std::string("config.") + what + ": dimension mismatch");
    };
    check_dim(cfg.mam.from, "mam.from");
    check_dim(cfg.mam.to, "mam.to");
    for (const auto& t : cfg.mam.targets)
      if (static_cast<int>(t.size()) != d)
        issues.push_back("config.mam.targets: dimension mismatch");
    if (cfg.sim.opts.x0.size() != 0 && static_cast<int>(cfg.sim.opts.x0.size()) != d)
      issues.push_back("config.sim.x0: dimension mismatch");
  }

  if (!issues.empty()) throw ConfigError(std::move(issues));
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  json jm{{"n_nodes", cfg.mam.opts.n_nodes},
          {"horizons", cfg.mam.opts.horizons},
          {"grad_tol", cfg.mam.opts.grad_tol},
          {"max_iter", cfg.mam.opts.max_iter},
          {"multi_start", cfg.mam.opts.multi_start}};
  if (cfg.mam.from) jm["from"] = point_to_json(*cfg.mam.from);
  if (cfg.mam.to) jm["to"] = point_to_json(*cfg.mam.to);
  if (!cfg.mam.targets.empty()) {
    json t = json::array();
    for (const auto& p : cfg.mam.targets) t.push_back(point_to_json(p));
    jm["targets"] = t;
  }

  json jg{{"h", cfg.grid.h}, {"tol", cfg.grid.tol}, {"max_sweeps", cfg.grid.max_sweeps}};
  if (cfg.grid.sources) {
    json s = json::array();
    for (const auto& p : *cfg.grid.sources) s.push_back(point_to_json(p));
    jg["sources"] = s;
  }
  if (cfg.grid.source_values) jg["source_values"] = *cfg.grid.source_values;

  json js{{"eps", cfg.sim.opts.eps},
          {"dt", cfg.sim.opts.dt},
          {"steps", cfg.sim.opts.steps},
          {"burn_in", cfg.sim.opts.burn_in},
          {"bins", cfg.sim.bins},
          {"stationarity", cfg.sim.stationarity},
          {"balls", cfg.sim.balls},
          {"rho", cfg.sim.rho},
          {"hitting", cfg.sim.hitting},
          {"hit_runs", cfg.sim.hit_runs},
          {"hit_cap", cfg.sim.hit_cap}};
  if (cfg.sim.opts.x0.size() != 0) js["x0"] = point_to_json(cfg.sim.opts.x0);
  if (cfg.sim.ball_centers) {
    json c = json::array();
    for (const auto& p : *cfg.sim.ball_centers) c.push_back(point_to_json(p));
    js["ball_centers"] = c;
  }
  if (cfg.sim.hit_start) js["hit_start"] = point_to_json(*cfg.sim.hit_start);
  if (!cfg.sim.hit_targets.empty()) {
    json t = json::array();
    for (const auto& [c, rho] : cfg.sim.hit_targets)
      t.push_back({{"center", point_to_json(c)}, {"rho", rho}});
    js["hit_targets"] = t;
  }

  json jc{{"probe_count", cfg.compare.probe_count}};
  if (!cfg.compare.probes.empty()) {
    json p = json::array();
    for (const auto& x : cfg.compare.probes) p.push_back(point_to_json(x));
    jc["probes"] = p;
  }

  return json{{"system", cfg.system_json},
              {"command", to_string(cfg.command)},
              {"out", cfg.out},
              {"seed", cfg.seed},
              {"overwrite", cfg.overwrite},
              {"equilibria",
               {{"n_starts", cfg.equilibria.n_starts},
                {"tol", cfg.equilibria.tol},
                {"alpha", cfg.equilibria.alpha},
                {"beta", cfg.equilibria.beta},
                {"n_samples", cfg.equilibria.n_samples}}},
              {"mam", jm},
              {"grid", jg},
              {"sim", js},
              {"compare", jc},
              {"multiwell",
               {{"simulate", cfg.multiwell.simulate}, {"rho", cfg.multiwell.rho}}}};
}

int run(const ExperimentConfig& cfg) {
  if (!cfg.system) throw ConfigError({"config.system: missing"});
  if (cfg.out.empty()) throw ConfigError({"config.out: missing"});

  const fs::path out(cfg.out);
  if (fs::exists(out) && !fs::is_empty(out) && !cfg.overwrite)
    throw ConfigError({"output directory '" + cfg.out +
                       "' exists and is not empty; pass overwrite to reuse it"});
  fs::create_directories(out);

  ArtifactSet art(out);
  std::vector<std::string> flags;
  int rc = 0;
  try {
    switch (cfg.command) {
      case Command::Equilibria: rc = cmd_equilibria(*cfg.system, cfg, art, flags); break;
      case Command::Quasipotential: rc = cmd_quasipotential(*cfg.system, cfg, art, flags); break;
      case Command::Hjb: rc = cmd_hjb(*cfg.system, cfg, art, flags); break;
      case Command::Simulate: rc = cmd_simulate(*cfg.system, cfg, art, flags); break;
      case Command::Compare: rc = cmd_compare(*cfg.system, cfg, art, flags); break;
      case Command::Multiwell: rc = cmd_multiwell(*cfg.system, cfg, art, flags); break;
    }
  } catch (const std::exception& e) {
    flags.push_back(std::string("error: ") + e.what());
    rc = 3;
  }
  art.finish(cfg.command, config_to_json(cfg), flags, rc != 0);
  for (const auto& f : flags) std::fprintf(stderr, "flag: %s\n", f.c_str());
  return rc;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"quasipotential toolkit"};
  app.allow_extras();
  std::string command, config_path;
  bool overwrite = false;
  app.add_option("command", command,
                 "equilibria|quasipotential|hjb|simulate|compare|multiwell");
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_flag("--overwrite", overwrite, "allow writing into an existing output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  json j;
  try {
    j = json::parse(read_file(config_path));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  // dotted-path overrides: --sim.eps 0.2 (value parsed as JSON when possible)
  std::vector<std::string> extras = app.remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string key = extras[i];
    if (key.rfind("--", 0) != 0) {
      std::fprintf(stderr, "config error: unexpected argument '%s'\n", key.c_str());
      return 2;
    }
    key = key.substr(2);
    std::string value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else if (i + 1 < extras.size()) {
      value = extras[++i];
    } else {
      std::fprintf(stderr, "config error: override '--%s' needs a value\n", key.c_str());
      return 2;
    }
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (...) {
      parsed = value;   // plain string
    }
    json* cur = &j;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (dot == std::string::npos) {
        (*cur)[part] = parsed;
        break;
      }
      cur = &(*cur)[part];
      start = dot + 1;
    }
  }

  if (!command.empty()) {
    if (j.contains("command") && j.at("command") != command) {
      std::fprintf(stderr, "config error: command '%s' conflicts with config command '%s'\n",
                   command.c_str(), j.at("command").get<std::string>().c_str());
      return 2;
    }
    j["command"] = command;
  }
  if (overwrite) j["overwrite"] = true;

  try {
    return run(parse_config_json(j));
  } catch (const ConfigError& e) {
    for (const auto& issue : e.issues) std::fprintf(stderr, "config error: %s\n", issue.c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

}  // namespace qp
