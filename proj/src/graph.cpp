#include "qp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "qp/csv.hpp"

namespace qp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

CostMatrix CostMatrix::zeros(int J) {
  CostMatrix m;
  m.size = J;
  m.v.assign(static_cast<std::size_t>(J) * static_cast<std::size_t>(J), 0.0);
  return m;
}

void CostMatrix::validate() const {
  if (size < 1) throw std::invalid_argument("cost matrix must be at least 1x1");
  if (static_cast<int>(v.size()) != size * size)
    throw std::invalid_argument("cost matrix storage size mismatch");
  for (int i = 0; i < size; ++i) {
    if (!at(i, i) || *at(i, i) != 0.0)
      throw std::invalid_argument("cost matrix diagonal must be zero");
    for (int j = 0; j < size; ++j)
      if (at(i, j) && (!std::isfinite(*at(i, j)) || *at(i, j) < 0.0))
        throw std::invalid_argument("cost matrix entries must be finite and nonnegative");
  }
}

bool is_igraph(const EdgeMap& map, int root) {
  const int J = static_cast<int>(map.size());
  if (root < 0 || root >= J) return false;
  if (map[static_cast<std::size_t>(root)] != -1) return false;
  for (int v = 0; v < J; ++v) {
    if (v == root) continue;
    const int p = map[static_cast<std::size_t>(v)];
    if (p < 0 || p >= J || p == v) return false;
    int cur = v;
    bool reached = false;
    for (int hop = 0; hop < J; ++hop) {
      cur = map[static_cast<std::size_t>(cur)];
      if (cur == -1) {  // walked onto the root
        reached = true;
        break;
      }
    }
    if (!reached) return false;  // cycle
  }
  return true;
}

std::vector<EdgeMap> enumerate_igraphs(int J, int root) {
  if (J < 1) throw std::invalid_argument("J must be positive");
  if (root < 0 || root >= J) throw std::invalid_argument("root index out of range");
  if (J > 8)
    throw std::invalid_argument(
        "enumerate_igraphs refuses J > 8 (count grows as J^(J-2)); "
        "use z_value_edmonds instead");

  std::vector<EdgeMap> out;
  EdgeMap map(static_cast<std::size_t>(J), -1);
  if (J == 1) {
    out.push_back(map);
    return out;
  }

  std::vector<int> nodes;
  for (int v = 0; v < J; ++v)
    if (v != root) nodes.push_back(v);

  // odometer over candidate parents in ascending order => lexicographic order
  std::vector<int> choice(nodes.size(), 0);
  const auto parent_of = [](int v, int c) { return c < v ? c : c + 1; };
  for (;;) {
    for (std::size_t k = 0; k < nodes.size(); ++k)
      map[static_cast<std::size_t>(nodes[k])] = parent_of(nodes[k], choice[k]);
    if (is_igraph(map, root)) out.push_back(map);
    int pos = static_cast<int>(nodes.size()) - 1;
    while (pos >= 0) {
      if (++choice[static_cast<std::size_t>(pos)] < J - 1) break;
      choice[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return out;
}

void write_cost_matrix_csv(std::ostream& os, const CostMatrix& m) {
  os << "from";
  for (int j = 0; j < m.size; ++j) os << ",to_" << j;
  os << "\n";
  for (int i = 0; i < m.size; ++i) {
    os << i;
    for (int j = 0; j < m.size; ++j) {
      os << ',';
      if (m.at(i, j)) os << format_double(*m.at(i, j));
    }
    os << "\n";
  }
}

CostMatrix read_cost_matrix_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("cost matrix csv: missing header");
  std::vector<std::vector<std::optional<double>>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::optional<double>> row;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        first = false;   // source index column
        continue;
      }
      if (cell.empty()) row.push_back(std::nullopt);
      else row.push_back(std::stod(cell));
    }
    rows.push_back(std::move(row));
  }
  CostMatrix m;
  m.size = static_cast<int>(rows.size());
  if (m.size < 1) throw std::runtime_error("cost matrix csv: no rows");
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != m.size)
      throw std::runtime_error("cost matrix csv: row length mismatch");
    for (const auto& c : row) m.v.push_back(c);
  }
  m.validate();
  return m;
}

namespace {

// Canonical total: edge costs summed in ascending node order, so equal maps
// give bitwise-equal totals regardless of which route found them.
double map_total(const CostMatrix& costs, const EdgeMap& map, int root) {
  double total = 0.0;
  for (int v = 0; v < static_cast<int>(map.size()); ++v) {
    if (v == root) continue;
    const int p = map[static_cast<std::size_t>(v)];
    if (p < 0) return kInf;
    const auto& c = costs.at(v, p);
    if (!c) return kInf;
    total += *c;
  }
  return total;
}

struct Edge {
  int u, v;        // current-level endpoints
  double w;        // reduced cost at this level
  int payload;     // edge id in the caller's numbering
};

// Recursive Chu-Liu/Edmonds: select a min-cost set of in-edges (one per
// non-root node) forming an arborescence; returns the chosen payload ids.
// Reduced costs steer the selection; totals are recomputed from original
// costs by the caller.
bool msa_select(int n, int root, const std::vector<Edge>& edges,
                std::vector<int>& chosen_payloads) {
  std::vector<int> best(static_cast<std::size_t>(n), -1);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const Edge& ed = edges[static_cast<std::size_t>(e)];
    if (ed.v == root || ed.u == ed.v) continue;
    const int b = best[static_cast<std::size_t>(ed.v)];
    if (b < 0 || ed.w < edges[static_cast<std::size_t>(b)].w)
      best[static_cast<std::size_t>(ed.v)] = e;
  }
  for (int v = 0; v < n; ++v)
    if (v != root && best[static_cast<std::size_t>(v)] < 0) return false;

  // cycle detection among the best in-edges
  std::vector<int> color(static_cast<std::size_t>(n), -1);  // visit epoch
  std::vector<int> cycle;
  for (int v0 = 0; v0 < n && cycle.empty(); ++v0) {
    if (v0 == root || color[static_cast<std::size_t>(v0)] != -1) continue;
    int cur = v0;
    while (cur != root && color[static_cast<std::size_t>(cur)] == -1) {
      color[static_cast<std::size_t>(cur)] = v0;
      cur = edges[static_cast<std::size_t>(best[static_cast<std::size_t>(cur)])].u;
    }
    if (cur != root && color[static_cast<std::size_t>(cur)] == v0) {
      int w = cur;
      do {
        cycle.push_back(w);
        w = edges[static_cast<std::size_t>(best[static_cast<std::size_t>(w)])].u;
      } while (w != cur);
    }
  }

  if (cycle.empty()) {
    for (int v = 0; v < n; ++v)
      if (v != root)
        chosen_payloads.push_back(edges[static_cast<std::size_t>(
            best[static_cast<std::size_t>(v)])].payload);
    return true;
  }

  // contract the cycle
  std::vector<char> in_cycle(static_cast<std::size_t>(n), 0);
  for (int w : cycle) in_cycle[static_cast<std::size_t>(w)] = 1;
  std::vector<int> id(static_cast<std::size_t>(n), -1);
  int n2 = 0;
  const int vc = n2++;  // supernode gets index 0
  for (int v = 0; v < n; ++v)
    id[static_cast<std::size_t>(v)] = in_cycle[static_cast<std::size_t>(v)] ? vc : n2++;

  std::vector<Edge> edges2;
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const Edge& ed = edges[static_cast<std::size_t>(e)];
    const int u2 = id[static_cast<std::size_t>(ed.u)];
    const int v2 = id[static_cast<std::size_t>(ed.v)];
    if (u2 == v2) continue;  // intra-cycle (or self) edge
    double w2 = ed.w;
    if (v2 == vc)
      w2 -= edges[static_cast<std::size_t>(best[static_cast<std::size_t>(ed.v)])].w;
    edges2.push_back({u2, v2, w2, e});
  }

  std::vector<int> chosen2;
  if (!msa_select(n2, id[static_cast<std::size_t>(root)], edges2, chosen2)) return false;

  int entered = -1;  // cycle node displaced by the external in-edge
  for (int e2 : chosen2) {
    const Edge& ed = edges[static_cast<std::size_t>(e2)];
    if (in_cycle[static_cast<std::size_t>(ed.v)]) entered = ed.v;
    chosen_payloads.push_back(ed.payload);
  }
  for (int w : cycle)
    if (w != entered)
      chosen_payloads.push_back(edges[static_cast<std::size_t>(
          best[static_cast<std::size_t>(w)])].payload);
  return true;
}

// One Edmonds solve on the reversed graph (an i-graph rooted at `root` is an
// arborescence of the graph with edge u->v of cost Ṽ(v, u)).
// `row_allow`, when given, restricts node v's out-edges to row_allow[v].
ZValue edmonds_once(const CostMatrix& costs, int root,
                    const std::vector<std::vector<char>>* row_allow) {
  const int J = costs.size;
  ZValue out;
  out.map.assign(static_cast<std::size_t>(J), -1);
  if (J == 1) {
    out.z = 0.0;
    return out;
  }

  std::vector<Edge> edges;
  std::vector<std::pair<int, int>> payload_edge;  // original (v, u): v's out-edge
  for (int v = 0; v < J; ++v)
    for (int u = 0; u < J; ++u) {
      if (u == v) continue;
      const auto& c = costs.at(v, u);
      if (!c) continue;
      if (row_allow && !(*row_allow)[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)])
        continue;
      edges.push_back({u, v, *c, static_cast<int>(payload_edge.size())});
      payload_edge.emplace_back(v, u);
    }

  std::vector<int> chosen;
  if (!msa_select(J, root, edges, chosen)) return out;  // z = nullopt
  for (int e : chosen)
    out.map[static_cast<std::size_t>(payload_edge[static_cast<std::size_t>(e)].first)] =
        payload_edge[static_cast<std::size_t>(e)].second;
  out.z = map_total(costs, out.map, root);
  return out;
}

}  // namespace

ZValue z_value_bruteforce(const CostMatrix& costs, int root) {
  costs.validate();
  if (root < 0 || root >= costs.size) throw std::invalid_argument("root index out of range");
  ZValue best;
  best.map.assign(static_cast<std::size_t>(costs.size), -1);
  double best_total = kInf;
  for (const EdgeMap& map : enumerate_igraphs(costs.size, root)) {
    const double total = map_total(costs, map, root);
    if (total < best_total) {  // strict: first (lex smallest) minimizer wins
      best_total = total;
      best.map = map;
    }
  }
  if (std::isfinite(best_total)) best.z = best_total;
  return best;
}

ZValue z_value_edmonds(const CostMatrix& costs, int root) {
  costs.validate();
  const int J = costs.size;
  if (root < 0 || root >= J) throw std::invalid_argument("root index out of range");

  ZValue first = edmonds_once(costs, root, nullptr);
  if (!first.z) return first;
  const double z_star = *first.z;
  const double tie_tol = 1e-9 * std::max(1.0, std::abs(z_star));

  // Deterministic minimizer: fix each node's parent to the smallest index that
  // preserves optimality, re-solving under the accumulated constraints. The
  // Z value itself is the plain O(J^3) solve; this sweep only canonicalizes
  // the argmin map.
  std::vector<std::vector<char>> allow(
      static_cast<std::size_t>(J), std::vector<char>(static_cast<std::size_t>(J), 1));
  for (int v = 0; v < J; ++v) {
    if (v == root) continue;
    for (int u = 0; u < J; ++u) {
      if (u == v || !costs.at(v, u)) continue;
      auto trial = allow;
      for (int w = 0; w < J; ++w)
        trial[static_cast<std::size_t>(v)][static_cast<std::size_t>(w)] =
            static_cast<char>(w == u);
      ZValue zt = edmonds_once(costs, root, &trial);
      if (zt.z && *zt.z <= z_star + tie_tol) {
        allow = std::move(trial);
        break;
      }
    }
  }
  ZValue out = edmonds_once(costs, root, &allow);
  out.z = map_total(costs, out.map, root);
  return out;
}

GraphResult equilibrium_potentials(const CostMatrix& costs) {
  costs.validate();
  const int J = costs.size;
  GraphResult res;
  res.Z.resize(static_cast<std::size_t>(J));
  res.maps.resize(static_cast<std::size_t>(J));
  res.W.resize(static_cast<std::size_t>(J));
  double zmin = kInf;
  for (int i = 0; i < J; ++i) {
    ZValue z = z_value_edmonds(costs, i);
    res.Z[static_cast<std::size_t>(i)] = z.z;
    res.maps[static_cast<std::size_t>(i)] = std::move(z.map);
    if (z.z) zmin = std::min(zmin, *z.z);
    else res.all_reachable = false;
  }
  if (std::isfinite(zmin))
    for (int i = 0; i < J; ++i)
      if (res.Z[static_cast<std::size_t>(i)])
        res.W[static_cast<std::size_t>(i)] = *res.Z[static_cast<std::size_t>(i)] - zmin;
  return res;
}

}  // namespace qp
