#include "qp/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace qp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

HjbGrid HjbGrid::regular(const Box& box, double target_h) {
  box.validate();
  if (box.dim() > 2) throw std::invalid_argument("hjb grids support dimension <= 2");
  if (!(target_h > 0.0)) throw std::invalid_argument("grid spacing must be positive");
  std::array<int, 2> counts{1, 1};
  for (int axis = 0; axis < box.dim(); ++axis) {
    counts[static_cast<std::size_t>(axis)] =
        std::max(2, static_cast<int>(std::lround(box.width(axis) / target_h)) + 1);
  }
  return regular(box, counts);
}

HjbGrid HjbGrid::regular(const Box& box, std::array<int, 2> counts) {
  box.validate();
  if (box.dim() > 2) throw std::invalid_argument("hjb grids support dimension <= 2");
  HjbGrid g;
  g.box = box;
  g.dim = box.dim();
  g.n = counts;
  if (g.dim == 1) g.n[1] = 1;
  for (int axis = 0; axis < g.dim; ++axis) {
    if (g.n[static_cast<std::size_t>(axis)] < 2)
      throw std::invalid_argument("grid needs at least 2 nodes per axis");
    g.h[static_cast<std::size_t>(axis)] =
        box.width(axis) / (g.n[static_cast<std::size_t>(axis)] - 1);
  }
  return g;
}

void HjbGrid::add_source(const Vector& point, double value) {
  if (static_cast<int>(point.size()) != dim)
    throw std::invalid_argument("source point dimension mismatch");
  int idx[2] = {0, 0};
  for (int axis = 0; axis < dim; ++axis) {
    const double t = (point[axis] - box.lo(axis)) / h[static_cast<std::size_t>(axis)];
    idx[axis] = std::clamp(static_cast<int>(std::lround(t)), 0,
                           n[static_cast<std::size_t>(axis)] - 1);
  }
  sources.push_back({flat(idx[0], idx[1]), value});
}

Vector HjbGrid::point(int node) const {
  Vector x(dim);
  const int i = node % n[0];
  x[0] = coord(0, i);
  if (dim == 2) x[1] = coord(1, node / n[0]);
  return x;
}

double HjbSolution::value_at(const Vector& x) const {
  const HjbGrid& g = grid;
  int i0[2] = {0, 0};
  double t[2] = {0.0, 0.0};
  for (int axis = 0; axis < g.dim; ++axis) {
    const double s = (x[axis] - g.box.lo(axis)) / g.h[static_cast<std::size_t>(axis)];
    int i = static_cast<int>(std::floor(s));
    i = std::clamp(i, 0, g.n[static_cast<std::size_t>(axis)] - 2);
    i0[axis] = i;
    t[axis] = std::clamp(s - i, 0.0, 1.0);
  }
  if (g.dim == 1) {
    const double w0 = W[static_cast<std::size_t>(g.flat(i0[0]))];
    const double w1 = W[static_cast<std::size_t>(g.flat(i0[0] + 1))];
    return (1.0 - t[0]) * w0 + t[0] * w1;
  }
  const double w00 = W[static_cast<std::size_t>(g.flat(i0[0], i0[1]))];
  const double w10 = W[static_cast<std::size_t>(g.flat(i0[0] + 1, i0[1]))];
  const double w01 = W[static_cast<std::size_t>(g.flat(i0[0], i0[1] + 1))];
  const double w11 = W[static_cast<std::size_t>(g.flat(i0[0] + 1, i0[1] + 1))];
  return (1.0 - t[0]) * (1.0 - t[1]) * w00 + t[0] * (1.0 - t[1]) * w10 +
         (1.0 - t[0]) * t[1] * w01 + t[0] * t[1] * w11;
}

double derive_hamiltonian(const SystemSpec& sys, const Vector& x, const Vector& p) {
  return 0.5 * p.dot(sys.a(x) * p) + sys.drift(x).dot(p);
}

namespace {

// Per-axis quadratic h_i(p) = a/2 p^2 + b p; the Godunov flux picks p from
// {backward difference, forward difference, vertex -b/a} per axis.
struct AxisData {
  double a = 1.0;   // diagonal entry of a(x) on this axis
  double b = 0.0;   // drift component
  double h = 1.0;   // spacing
  double WL = kInf; // left neighbor value (inf when missing)
  double WR = kInf;
};

inline double hval(double a, double b, double p) { return 0.5 * a * p * p + b * p; }

// Godunov numerical Hamiltonian at trial value Wc; nondecreasing in Wc.
double godunov_flux(const AxisData* ax, int dim, double Wc) {
  double flux = 0.0;
  for (int i = 0; i < dim; ++i) {
    const AxisData& d = ax[i];
    const double pv = -d.b / d.a;  // vertex of the axis quadratic
    const bool hasL = std::isfinite(d.WL);
    const bool hasR = std::isfinite(d.WR);
    if (hasL && hasR) {
      const double pm = (Wc - d.WL) / d.h;
      const double pp = (d.WR - Wc) / d.h;
      if (pm <= pp)
        flux += hval(d.a, d.b, std::clamp(pv, pm, pp));
      else
        flux += std::max(hval(d.a, d.b, pm), hval(d.a, d.b, pp));
    } else if (hasL) {
      const double pm = (Wc - d.WL) / d.h;
      flux += hval(d.a, d.b, std::max(pv, pm));
    } else if (hasR) {
      const double pp = (d.WR - Wc) / d.h;
      flux += hval(d.a, d.b, std::min(pv, pp));
    } else {
      flux += hval(d.a, d.b, pv);
    }
  }
  return flux;
}

// Candidate update at one node: enumerate the per-axis branches (backward,
// forward, vertex), solve the resulting quadratic in W, and keep the smallest
// root at which the true Godunov flux vanishes (the causal root).
double node_update(const AxisData* ax, int dim, double current) {
  double best = current;
  const int combos = dim == 1 ? 3 : 9;
  for (int combo = 0; combo < combos; ++combo) {
    double A = 0.0, B = 0.0, C = 0.0;
    bool valid = true;
    bool depends_on_w = false;
    int sel = combo;
    for (int i = 0; i < dim; ++i, sel /= 3) {
      const AxisData& d = ax[i];
      const int branch = sel % 3;
      if (branch == 0) {  // backward difference: p = (W - WL)/h
        if (!std::isfinite(d.WL)) { valid = false; break; }
        const double ih = 1.0 / d.h;
        A += 0.5 * d.a * ih * ih;
        B += -d.a * d.WL * ih * ih + d.b * ih;
        C += 0.5 * d.a * d.WL * d.WL * ih * ih - d.b * d.WL * ih;
        depends_on_w = true;
      } else if (branch == 1) {  // forward difference: p = (WR - W)/h
        if (!std::isfinite(d.WR)) { valid = false; break; }
        const double ih = 1.0 / d.h;
        A += 0.5 * d.a * ih * ih;
        B += -d.a * d.WR * ih * ih - d.b * ih;
        C += 0.5 * d.a * d.WR * d.WR * ih * ih + d.b * d.WR * ih;
        depends_on_w = true;
      } else {  // vertex: p = -b/a, contributes -b^2/(2a)
        C += -0.5 * d.b * d.b / d.a;
      }
    }
    if (!valid || !depends_on_w) continue;

    double roots[2];
    int n_roots = 0;
    if (A > 0.0) {
      const double disc = B * B - 4.0 * A * C;
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      roots[n_roots++] = (-B - sq) / (2.0 * A);
      roots[n_roots++] = (-B + sq) / (2.0 * A);
    } else if (B != 0.0) {
      roots[n_roots++] = -C / B;
    }
    for (int r = 0; r < n_roots; ++r) {
      const double Wc = roots[r];
      if (!std::isfinite(Wc) || Wc >= best) continue;
      const double flux = godunov_flux(ax, dim, Wc);
      double scale = 1.0;
      for (int i = 0; i < dim; ++i) {
        const AxisData& d = ax[i];
        const double pm = std::isfinite(d.WL) ? std::abs(Wc - d.WL) / d.h : 0.0;
        const double pp = std::isfinite(d.WR) ? std::abs(d.WR - Wc) / d.h : 0.0;
        const double pmax = std::max({pm, pp, std::abs(d.b / d.a)});
        scale = std::max(scale, 0.5 * d.a * pmax * pmax + std::abs(d.b) * pmax);
      }
      if (std::abs(flux) <= 1e-9 * scale) best = std::max(Wc, 0.0);
    }
  }
  return best;
}

}  // namespace

HjbSolution sweep_solve(const SystemSpec& sys, const HjbGrid& grid, double tol,
                        int max_sweeps) {
  if (grid.dim > 2) throw std::invalid_argument("sweep_solve supports dimension <= 2");
  if (grid.sources.empty()) throw std::invalid_argument("grid has no source nodes");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");

  const int dim = grid.dim;
  const int total = grid.nodes();

  // Precompute drift and the diagonal of a per node; reject anisotropic a.
  std::vector<double> bfield(static_cast<std::size_t>(total) * dim);
  std::vector<double> adiag(static_cast<std::size_t>(total) * dim);
  for (int nd = 0; nd < total; ++nd) {
    const Vector x = grid.point(nd);
    const Vector b = sys.drift(x);
    const Matrix ax = sys.a(x);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        if (i != j && std::abs(ax(i, j)) > 1e-12 * ax.diagonal().maxCoeff())
          throw std::invalid_argument(
              "sweep_solve requires diagonal a(x) on the grid; use the path-space "
              "solver (mam) for anisotropic diffusion");
    for (int i = 0; i < dim; ++i) {
      bfield[static_cast<std::size_t>(nd) * dim + static_cast<std::size_t>(i)] = b[i];
      adiag[static_cast<std::size_t>(nd) * dim + static_cast<std::size_t>(i)] = ax(i, i);
      if (!(ax(i, i) > 0.0))
        throw std::invalid_argument("a(x) must be positive definite on the grid");
    }
  }

  HjbSolution sol;
  sol.grid = grid;
  sol.W.assign(static_cast<std::size_t>(total), kInf);
  std::vector<char> is_source(static_cast<std::size_t>(total), 0);
  for (const auto& s : grid.sources) {
    sol.W[static_cast<std::size_t>(s.node)] =
        std::min(sol.W[static_cast<std::size_t>(s.node)], s.value);
    is_source[static_cast<std::size_t>(s.node)] = 1;
  }

  const int nx = grid.n[0];
  const int ny = dim == 2 ? grid.n[1] : 1;
  double running_max = 0.0;
  for (double w : sol.W)
    if (std::isfinite(w)) running_max = std::max(running_max, w);

  auto update_node = [&](int i, int j) -> double {
    const int nd = grid.flat(i, j);
    if (is_source[static_cast<std::size_t>(nd)]) return 0.0;
    AxisData ax[2];
    for (int axis = 0; axis < dim; ++axis) {
      AxisData& d = ax[axis];
      d.a = adiag[static_cast<std::size_t>(nd) * dim + static_cast<std::size_t>(axis)];
      d.b = bfield[static_cast<std::size_t>(nd) * dim + static_cast<std::size_t>(axis)];
      d.h = grid.h[static_cast<std::size_t>(axis)];
      const int c = axis == 0 ? i : j;
      const int cmax = grid.n[static_cast<std::size_t>(axis)] - 1;
      d.WL = c > 0 ? sol.W[static_cast<std::size_t>(axis == 0 ? grid.flat(i - 1, j)
                                                              : grid.flat(i, j - 1))]
                   : kInf;
      d.WR = c < cmax ? sol.W[static_cast<std::size_t>(axis == 0 ? grid.flat(i + 1, j)
                                                                 : grid.flat(i, j + 1))]
                      : kInf;
    }
    const double old = sol.W[static_cast<std::size_t>(nd)];
    const double cand = node_update(ax, dim, old);
    if (cand >= old) return 0.0;
    // boundary blow-up guard: an update far above everything seen so far is
    // deferred to a later sweep
    if (running_max > 0.0 && cand > 10.0 * running_max) return 0.0;
    sol.W[static_cast<std::size_t>(nd)] = cand;
    running_max = std::max(running_max, cand);
    return std::isfinite(old) ? old - cand : kInf;
  };

  const int dirs = 1 << dim;
  int sweeps = 0;
  while (sweeps < max_sweeps) {
    double cycle_delta = 0.0;
    for (int dir = 0; dir < dirs && sweeps < max_sweeps; ++dir, ++sweeps) {
      const bool xf = (dir & 1) == 0;
      const bool yf = (dir & 2) == 0;
      for (int jj = 0; jj < ny; ++jj) {
        const int j = yf ? jj : ny - 1 - jj;
        for (int ii = 0; ii < nx; ++ii) {
          const int i = xf ? ii : nx - 1 - ii;
          const double delta = update_node(i, j);
          cycle_delta = std::max(cycle_delta, delta);
        }
      }
    }
    sol.max_delta = cycle_delta;
    if (cycle_delta < tol) {
      sol.converged = true;
      break;
    }
  }
  sol.sweeps = sweeps;
  for (double w : sol.W)
    if (!std::isfinite(w)) ++sol.unreached;
  if (sol.unreached > 0) sol.converged = false;
  return sol;
}

double residual(const SystemSpec& sys, const HjbSolution& sol) {
  const HjbGrid& g = sol.grid;
  double worst = 0.0;
  const int nx = g.n[0];
  const int ny = g.dim == 2 ? g.n[1] : 1;
  for (int j = 0; j < ny; ++j) {
    if (g.dim == 2 && (j == 0 || j == ny - 1)) continue;
    for (int i = 1; i < nx - 1; ++i) {
      Vector p(g.dim);
      const double wl = sol.W[static_cast<std::size_t>(g.flat(i - 1, j))];
      const double wr = sol.W[static_cast<std::size_t>(g.flat(i + 1, j))];
      if (!std::isfinite(wl) || !std::isfinite(wr)) continue;
      p[0] = (wr - wl) / (2.0 * g.h[0]);
      if (g.dim == 2) {
        const double wd = sol.W[static_cast<std::size_t>(g.flat(i, j - 1))];
        const double wu = sol.W[static_cast<std::size_t>(g.flat(i, j + 1))];
        if (!std::isfinite(wd) || !std::isfinite(wu)) continue;
        p[1] = (wu - wd) / (2.0 * g.h[1]);
      }
      const Vector x = g.point(g.flat(i, j));
      worst = std::max(worst, std::abs(derive_hamiltonian(sys, x, p)));
    }
  }
  return worst;
}

void write_solution_csv(std::ostream& os, const HjbSolution& sol) {
  const HjbGrid& g = sol.grid;
  os << (g.dim == 1 ? "x1,W" : "x1,x2,W") << "\n";
  char buf[32];
  for (int nd = 0; nd < g.nodes(); ++nd) {
    const Vector x = g.point(nd);
    for (int axis = 0; axis < g.dim; ++axis) {
      std::snprintf(buf, sizeof buf, "%.17g", x[axis]);
      os << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", sol.W[static_cast<std::size_t>(nd)]);
    os << buf << "\n";
  }
}

}  // namespace qp
