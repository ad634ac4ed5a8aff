#include "qp/mam.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "qp/parallel.hpp"
#include "qp/rng.hpp"

namespace qp {

void MamOptions::validate() const {
  if (n_nodes < 1) throw std::invalid_argument("n_nodes must be >= 1");
  if (horizons.empty()) throw std::invalid_argument("horizon ladder must not be empty");
  double prev = 0.0;
  for (double T : horizons) {
    if (!(T > prev)) throw std::invalid_argument("horizon ladder must be strictly increasing");
    prev = T;
  }
  if (!(grad_tol > 0.0)) throw std::invalid_argument("grad_tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (multi_start < 1) throw std::invalid_argument("multi_start must be >= 1");
}

namespace {

// Flattened view of the interior nodes.
Eigen::VectorXd pack_interior(const DiscretePath& p) {
  const int N = p.segments(), d = p.dim();
  Eigen::VectorXd z((N - 1) * d);
  for (int k = 1; k < N; ++k)
    z.segment((k - 1) * d, d) = p.nodes[static_cast<std::size_t>(k)];
  return z;
}

void unpack_interior(const Eigen::VectorXd& z, DiscretePath& p) {
  const int N = p.segments(), d = p.dim();
  for (int k = 1; k < N; ++k)
    p.nodes[static_cast<std::size_t>(k)] = z.segment((k - 1) * d, d);
}

Eigen::VectorXd flatten_gradient(const std::vector<Vector>& g) {
  const int d = static_cast<int>(g.empty() ? 0 : g[0].size());
  Eigen::VectorXd out(static_cast<int>(g.size()) * d);
  for (std::size_t k = 0; k < g.size(); ++k) out.segment(static_cast<int>(k) * d, d) = g[k];
  return out;
}

struct SolveStats {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::vector<double> trace;
};

// Limited-memory BFGS with Armijo backtracking on the flattened interior
// nodes. Accepted iterates never increase the action (line-search contract).
SolveStats lbfgs_minimize_path(const SystemSpec& sys, DiscretePath& path, double tol,
                               int max_iter) {
  const int mem = 10;
  SolveStats stats;
  if (path.segments() < 2) {  // no interior nodes to move
    stats.converged = true;
    stats.trace.push_back(path_action(sys, path));
    return stats;
  }

  auto objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    unpack_interior(z, path);
    if (grad) *grad = flatten_gradient(path_action_gradient(sys, path));
    return path_action(sys, path);
  };

  Eigen::VectorXd z = pack_interior(path);
  Eigen::VectorXd g;
  double f = objective(z, &g);
  stats.trace.push_back(f);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int it = 0; it < max_iter; ++it) {
    stats.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (stats.grad_norm <= tol) {
      stats.converged = true;
      break;
    }

    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] =
          rho_hist[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(q);
      q -= alpha[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      const double yy = y_hist.back().squaredNorm();
      if (yy > 0.0) gamma = s_hist.back().dot(y_hist.back()) / yy;
    }
    Eigen::VectorXd dir = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += (alpha[i] - beta) * s_hist[i];
    }
    dir = -dir;
    if (g.dot(dir) >= 0.0) dir = -g;  // not a descent direction: reset

    // Armijo backtracking
    const double slope = g.dot(dir);
    double step = 1.0;
    double f_new = f;
    Eigen::VectorXd z_new;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      z_new = z + step * dir;
      f_new = objective(z_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // stalled: restore the best iterate and stop
      unpack_interior(z, path);
      stats.iterations = it;
      stats.converged = stats.grad_norm <= tol;
      return stats;
    }

    Eigen::VectorXd g_new;
    objective(z_new, &g_new);
    const Eigen::VectorXd s = z_new - z;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > mem) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    z = std::move(z_new);
    g = std::move(g_new);
    f = f_new;
    stats.trace.push_back(f);
    stats.iterations = it + 1;
  }
  stats.grad_norm = g.lpNorm<Eigen::Infinity>();
  if (stats.grad_norm <= tol) stats.converged = true;
  unpack_interior(z, path);
  return stats;
}

QuasipotentialResult solve_fixed_T(const SystemSpec& sys, DiscretePath path,
                                   const MamOptions& opts) {
  QuasipotentialResult res;
  SolveStats stats = lbfgs_minimize_path(sys, path, opts.grad_tol, opts.max_iter);
  res.path = std::move(path);
  res.value = path_action(sys, res.path);
  res.best_T = res.path.horizon;
  res.iterations = stats.iterations;
  res.grad_norm = stats.grad_norm;
  res.converged = stats.converged;
  res.action_trace = std::move(stats.trace);
  return res;
}

void warn_if_not_stable_equilibrium(const SystemSpec& sys, const Vector& x_from,
                                    QuasipotentialResult& res) {
  const double scale = std::max(1.0, x_from.norm());
  if (sys.drift(x_from).norm() > 1e-6 * scale) {
    res.warnings.push_back("source point is not an equilibrium of the drift");
    return;
  }
  Eigen::EigenSolver<Matrix> es(sys.drift_jacobian(x_from));
  if (!(es.eigenvalues().real().array() < 0.0).all())
    res.warnings.push_back("source equilibrium is not stable");
}

DiscretePath perturbed_start(const Vector& from, const Vector& to, int n_segments,
                             double T, std::uint64_t seed) {
  DiscretePath p = DiscretePath::straight_line(from, to, n_segments, T);
  GaussianStream gauss(seed);
  const int d = static_cast<int>(from.size());
  Vector dir(d);
  for (int i = 0; i < d; ++i) dir[i] = gauss.next();
  const double amp = 0.25 * std::max((to - from).norm(), 1.0);
  for (int k = 1; k < n_segments; ++k) {
    const double t = static_cast<double>(k) / n_segments;
    p.nodes[static_cast<std::size_t>(k)] += amp * std::sin(M_PI * t) * dir;
  }
  return p;
}

}  // namespace

QuasipotentialResult minimize_action_fixed_T(const SystemSpec& sys, const Vector& x_from,
                                             const Vector& x_to, double T,
                                             const MamOptions& opts) {
  opts.validate();
  if (!(T > 0.0)) throw std::invalid_argument("horizon T must be positive");
  DiscretePath init = DiscretePath::straight_line(x_from, x_to, opts.n_nodes, T);
  return solve_fixed_T(sys, std::move(init), opts);
}

QuasipotentialResult quasipotential(const SystemSpec& sys, const Vector& x_from,
                                    const Vector& x_to, const MamOptions& opts) {
  opts.validate();

  auto run_ladder = [&](int start_index) {
    QuasipotentialResult best;
    best.value = std::numeric_limits<double>::infinity();
    double prev_rung = std::numeric_limits<double>::infinity();
    double last_rung = std::numeric_limits<double>::infinity();
    DiscretePath warm;
    bool have_warm = false;
    for (double T : opts.horizons) {
      DiscretePath init;
      if (have_warm) {
        init = warm;             // same nodes, rescaled clock
        init.horizon = T;
      } else if (start_index == 0) {
        init = DiscretePath::straight_line(x_from, x_to, opts.n_nodes, T);
      } else {
        init = perturbed_start(x_from, x_to, opts.n_nodes, T,
                               substream_seed(opts.seed, static_cast<std::uint64_t>(start_index)));
      }
      QuasipotentialResult rung = solve_fixed_T(sys, std::move(init), opts);
      warm = rung.path;
      have_warm = true;
      prev_rung = last_rung;
      last_rung = rung.value;
      if (rung.value < best.value) best = std::move(rung);  // strict: smallest T wins ties
    }
    if (std::isfinite(prev_rung) &&
        prev_rung - last_rung > 0.01 * std::max(std::abs(last_rung), 1e-12))
      best.horizon_limited = true;
    return best;
  };

  std::vector<QuasipotentialResult> starts(static_cast<std::size_t>(opts.multi_start));
  parallel_for(starts.size(), [&](std::size_t s) { starts[s] = run_ladder(static_cast<int>(s)); });

  std::size_t win = 0;
  for (std::size_t s = 1; s < starts.size(); ++s)
    if (starts[s].value < starts[win].value) win = s;
  QuasipotentialResult best = std::move(starts[win]);
  warn_if_not_stable_equilibrium(sys, x_from, best);
  return best;
}

PairCostResult pair_cost_matrix(const SystemSpec& sys,
                                const std::vector<Equilibrium>& equilibria,
                                const MamOptions& opts) {
  opts.validate();
  const int J = static_cast<int>(equilibria.size());
  if (J < 1) throw std::invalid_argument("pair_cost_matrix needs at least one equilibrium");

  PairCostResult out;
  out.costs = CostMatrix::zeros(J);
  out.results.resize(static_cast<std::size_t>(J) * static_cast<std::size_t>(J));

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < J; ++i)
    for (int j = 0; j < J; ++j)
      if (i != j) pairs.emplace_back(i, j);

  const double proximity_warn = 1e-3 * sys.box().diameter();
  parallel_for(pairs.size(), [&](std::size_t t) {
    const auto [i, j] = pairs[t];
    QuasipotentialResult r =
        quasipotential(sys, equilibria[static_cast<std::size_t>(i)].location,
                       equilibria[static_cast<std::size_t>(j)].location, opts);
    // minimum distance of interior nodes to the excluded equilibria x_k, k != i,j
    double prox = std::numeric_limits<double>::infinity();
    for (int k = 0; k < J; ++k) {
      if (k == i || k == j) continue;
      const Vector& xk = equilibria[static_cast<std::size_t>(k)].location;
      for (int n = 1; n < r.path.segments(); ++n)
        prox = std::min(prox, (r.path.nodes[static_cast<std::size_t>(n)] - xk).norm());
    }
    r.excluded_proximity = prox;
    if (prox < proximity_warn)
      r.warnings.push_back("optimal path passes within 1e-3 box diameters of an "
                           "excluded equilibrium");
    out.results[static_cast<std::size_t>(i * J + j)] = std::move(r);
  });

  for (const auto& [i, j] : pairs) {
    const auto& r = out.results[static_cast<std::size_t>(i * J + j)];
    out.costs.at(i, j) = r.value;
    if (!r.converged) out.provisional = true;
  }
  return out;
}

std::vector<std::pair<Vector, QuasipotentialResult>> quasipotential_field(
    const SystemSpec& sys, const Vector& x_from, const std::vector<Vector>& targets,
    const MamOptions& opts) {
  opts.validate();
  std::vector<std::pair<Vector, QuasipotentialResult>> out(targets.size());
  parallel_for(targets.size(), [&](std::size_t t) {
    out[t] = {targets[t], quasipotential(sys, x_from, targets[t], opts)};
  });
  return out;
}

double assemble_global_W(const SystemSpec& sys, const std::vector<Equilibrium>& equilibria,
                         const std::vector<double>& W_i, const Vector& x,
                         const MamOptions& opts, std::vector<AssembleBranch>* detail) {
  if (equilibria.size() != W_i.size())
    throw std::invalid_argument("W_i must have one value per equilibrium");
  double best = std::numeric_limits<double>::infinity();

  std::vector<int> stable;
  for (int i = 0; i < static_cast<int>(equilibria.size()); ++i)
    if (equilibria[static_cast<std::size_t>(i)].kind == EquilibriumKind::Stable)
      stable.push_back(i);
  if (stable.empty())
    throw std::invalid_argument("assemble_global_W needs at least one stable equilibrium");

  std::vector<AssembleBranch> branches(stable.size());
  parallel_for(stable.size(), [&](std::size_t s) {
    const int i = stable[s];
    QuasipotentialResult r =
        quasipotential(sys, equilibria[static_cast<std::size_t>(i)].location, x, opts);
    branches[s] = {i, r.value, r.value + W_i[static_cast<std::size_t>(i)], r.converged};
  });
  for (const auto& b : branches) best = std::min(best, b.total);
  if (detail) *detail = std::move(branches);
  return best;
}

}  // namespace qp
