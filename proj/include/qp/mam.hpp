#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qp/action.hpp"
#include "qp/dynamics.hpp"
#include "qp/graph.hpp"
#include "qp/path.hpp"
#include "qp/system.hpp"

namespace qp {

struct MamOptions {
  int n_nodes = 200;                               // segments N (N+1 path points)
  std::vector<double> horizons = {1, 2, 4, 8, 16, 32};  // strictly increasing T ladder
  double grad_tol = 1e-6;                          // max-norm of the action gradient
  int max_iter = 5000;
  int multi_start = 1;                             // straight line + perturbed starts
  std::uint64_t seed = 0;                          // perturbation substreams

  void validate() const;
};

struct QuasipotentialResult {
  double value = 0.0;                 // = path_action(path), >= 0
  double best_T = 0.0;
  DiscretePath path;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  bool horizon_limited = false;       // ladder exhausted while still improving > 1%/rung
  double excluded_proximity = std::numeric_limits<double>::infinity();
  std::vector<std::string> warnings;
  std::vector<double> action_trace;   // objective per accepted iterate (winning solve)
};

// Fixed-horizon local minimization of the discrete action with both endpoints
// pinned, started from the straight line. Non-convergence is reported in the
// result, not thrown.
QuasipotentialResult minimize_action_fixed_T(const SystemSpec& sys, const Vector& x_from,
                                             const Vector& x_to, double T,
                                             const MamOptions& opts);

// Quasipotential estimate: minimum over the horizon ladder, each rung
// warm-started from the previous minimizer (same nodes, rescaled clock).
// Ties between equal-action rungs resolve to the smallest T.
QuasipotentialResult quasipotential(const SystemSpec& sys, const Vector& x_from,
                                    const Vector& x_to, const MamOptions& opts);

struct PairCostResult {
  CostMatrix costs;                          // J x J, zero diagonal
  std::vector<QuasipotentialResult> results; // row-major, diagonal untouched
  bool provisional = false;                  // some entry failed to converge
};

// Pairwise transition costs between equilibria. The "avoid other equilibria"
// constraint is not enforced; the minimum interior-node distance to excluded
// equilibria is recorded per entry and a warning is raised below
// 1e-3 * box diameter.
PairCostResult pair_cost_matrix(const SystemSpec& sys,
                                const std::vector<Equilibrium>& equilibria,
                                const MamOptions& opts);

// Batch of quasipotential solves, parallel over targets, deterministic.
std::vector<std::pair<Vector, QuasipotentialResult>> quasipotential_field(
    const SystemSpec& sys, const Vector& x_from, const std::vector<Vector>& targets,
    const MamOptions& opts);

}  // namespace qp
