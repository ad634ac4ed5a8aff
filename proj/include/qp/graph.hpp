#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "qp/dynamics.hpp"
#include "qp/system.hpp"

namespace qp {

// J x J matrix of pairwise transition costs V~(x_i, x_j). Diagonal is zero;
// absent entries mean unreachable (+infinity, represented explicitly rather
// than by a sentinel value).
struct CostMatrix {
  int size = 0;
  std::vector<std::optional<double>> v;   // row-major, row = source

  static CostMatrix zeros(int J);
  std::optional<double>& at(int i, int j) { return v[static_cast<std::size_t>(i * size + j)]; }
  const std::optional<double>& at(int i, int j) const {
    return v[static_cast<std::size_t>(i * size + j)];
  }
  void validate() const;   // diagonal present and 0, finite entries >= 0
};

// Edge map of an i-graph: parent per node, -1 at the root. An i-graph has one
// outgoing edge per non-root node, no cycles, and every path reaches the root
// (a rooted in-arborescence).
using EdgeMap = std::vector<int>;

bool is_igraph(const EdgeMap& map, int root);

// All i-graphs on {0..J-1} rooted at `root`. Refuses J > 8 (the count grows
// as J^(J-2)); use z_value_edmonds for larger instances.
std::vector<EdgeMap> enumerate_igraphs(int J, int root);

// CSV round trip: header "from,to_0,..,to_{J-1}", one row per source,
// unreachable entries as empty cells.
void write_cost_matrix_csv(std::ostream& os, const CostMatrix& m);
CostMatrix read_cost_matrix_csv(std::istream& is);

struct ZValue {
  std::optional<double> z;   // nullopt: root unreachable from some node
  EdgeMap map;               // lexicographically smallest minimizer
};

// Exact minimum over enumerate_igraphs (J <= 8). Oracle for the fast route.
ZValue z_value_bruteforce(const CostMatrix& costs, int root);

// Chu-Liu/Edmonds minimum-cost in-arborescence, O(J^3)-ish; agrees with the
// brute force exactly, including the lexicographic tie-break.
ZValue z_value_edmonds(const CostMatrix& costs, int root);

struct GraphResult {
  std::vector<std::optional<double>> Z;
  std::vector<EdgeMap> maps;
  std::vector<std::optional<double>> W;   // Z_i - min_j Z_j; min over finite W is 0
  bool all_reachable = true;
};

// Z per root via z_value_edmonds, then W_i = Z_i - min_j Z_j.
GraphResult equilibrium_potentials(const CostMatrix& costs);

// Theorem-4 style assembly: W(x) = min over stable equilibria i of
// [path cost from x_i to x  +  W_i]. The control-form cost of driving x to
// x_i equals the forward action from x_i to x by time reversal, which is what
// the path solver computes. Defined in mam.cpp (needs the solver).
struct MamOptions;
struct AssembleBranch {
  int index;          // equilibrium index
  double path_cost;   // quasipotential from x_index to x
  double total;       // path_cost + W_index
  bool converged;
};
double assemble_global_W(const SystemSpec& sys, const std::vector<Equilibrium>& equilibria,
                         const std::vector<double>& W_i, const Vector& x,
                         const MamOptions& opts,
                         std::vector<AssembleBranch>* detail = nullptr);

}  // namespace qp
