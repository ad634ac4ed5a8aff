#pragma once

#include <iosfwd>
#include <vector>

#include "qp/system.hpp"

namespace qp {

// Time-discretized trajectory on a uniform grid: N+1 nodes over [0, T],
// dt = T/N. The endpoints phi(0), phi(T) are fixed; optimizers move interior
// nodes only.
struct DiscretePath {
  double horizon = 1.0;               // T
  std::vector<Vector> nodes;          // N+1 points

  int segments() const { return static_cast<int>(nodes.size()) - 1; }
  int dim() const { return nodes.empty() ? 0 : static_cast<int>(nodes[0].size()); }
  double dt() const { return horizon / segments(); }

  void validate() const;  // N >= 1, T > 0, all nodes finite and same dimension

  static DiscretePath straight_line(const Vector& from, const Vector& to,
                                    int n_segments, double horizon);
};

// Control-form trajectory for ydot = -b(y) - u. The discrete dynamics hold
// with b evaluated at segment midpoints, matching the action quadrature:
//   (y_{k+1} - y_k)/dt + b((y_k+y_{k+1})/2) + u_k = 0.
struct ControlTrajectory {
  double horizon = 1.0;
  std::vector<Vector> states;     // N+1
  std::vector<Vector> controls;   // N, one per segment
};

// CSV: header "t,x1[,x2,...]", one row per node, round-trip precision.
void write_path_csv(std::ostream& os, const DiscretePath& path);
DiscretePath read_path_csv(std::istream& is);

}  // namespace qp
