#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "qp/system.hpp"

namespace qp {

// Regular grid over a 1D or 2D domain box with quasipotential sources pinned
// to fixed values (grid-snapped).
struct HjbGrid {
  Box box;
  int dim = 1;
  std::array<int, 2> n{2, 1};        // nodes per axis (axis 1 unused when dim == 1)
  std::array<double, 2> h{0.0, 0.0}; // spacing per axis

  struct Source {
    int node = 0;      // flat index
    double value = 0.0;
  };
  std::vector<Source> sources;

  static HjbGrid regular(const Box& box, double target_h);
  static HjbGrid regular(const Box& box, std::array<int, 2> counts);

  // Snaps the point to the nearest node. Sources pin W there permanently.
  void add_source(const Vector& point, double value = 0.0);

  int nodes() const { return dim == 1 ? n[0] : n[0] * n[1]; }
  int flat(int i, int j = 0) const { return j * n[0] + i; }
  double coord(int axis, int idx) const {
    return box.lo(axis) + h[static_cast<std::size_t>(axis)] * idx;
  }
  Vector point(int node) const;
};

struct HjbSolution {
  HjbGrid grid;
  std::vector<double> W;       // +inf marks nodes never reached
  int sweeps = 0;              // directional passes performed
  double max_delta = 0.0;      // last full-cycle max update
  bool converged = false;
  int unreached = 0;

  // Multilinear interpolation; +inf if a surrounding node is unreached.
  double value_at(const Vector& x) const;
};

// H(x, p) = 1/2 p^T a(x) p + b(x)^T p (the minimized-over-controls
// Hamiltonian of the stationary quasipotential equation).
double derive_hamiltonian(const SystemSpec& sys, const Vector& x, const Vector& p);

// Gauss-Seidel fast sweeping with the Godunov upwind numerical Hamiltonian.
// Requires dim <= 2 and diagonal a(x) on the grid; per-node updates solve the
// one-point quadratic in closed form and keep the smallest (causal) root.
// Node values never increase; sweeps cycle the 2^d diagonal orderings until
// the max update over a cycle drops below tol.
HjbSolution sweep_solve(const SystemSpec& sys, const HjbGrid& grid, double tol,
                        int max_sweeps);

// A posteriori residual: max over interior nodes of |H(x, central-difference
// grad W)|; O(h) for the first-order scheme on smooth solutions.
double residual(const SystemSpec& sys, const HjbSolution& sol);

// CSV rows x1[,x2],W (header mandatory).
void write_solution_csv(std::ostream& os, const HjbSolution& sol);

}  // namespace qp
