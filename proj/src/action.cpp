#include "qp/action.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace qp {

namespace {

// a^{-1}(m) v via a Cholesky factorization of a(m); identity sigma short-circuits.
inline Vector apply_a_inv(const SystemSpec& sys, const Vector& m, const Vector& v) {
  if (sys.sigma_identity()) return v;
  Eigen::LLT<Matrix> llt(sys.a(m));
  if (llt.info() != Eigen::Success)
    throw std::domain_error("a(x) not positive definite along path");
  return llt.solve(v);
}

}  // namespace

double path_action(const SystemSpec& sys, const DiscretePath& path) {
  path.validate();
  const int N = path.segments();
  const double dt = path.dt();
  double total = 0.0;
  Vector m(path.dim()), v(path.dim()), b(path.dim());
  for (int k = 0; k < N; ++k) {
    const Vector& x0 = path.nodes[static_cast<std::size_t>(k)];
    const Vector& x1 = path.nodes[static_cast<std::size_t>(k) + 1];
    m = 0.5 * (x0 + x1);
    sys.drift_into(m.data(), b.data());
    v = (x1 - x0) / dt - b;
    const Vector w = apply_a_inv(sys, m, v);
    total += 0.5 * dt * v.dot(w);
  }
  return total;
}

std::vector<Vector> path_action_gradient(const SystemSpec& sys, const DiscretePath& path) {
  path.validate();
  const int N = path.segments();
  const int d = path.dim();
  const double dt = path.dt();
  std::vector<Vector> grad(static_cast<std::size_t>(N) - 1, Vector::Zero(d));

  Vector m(d), v(d), b(d);
  const bool var_a = !sys.sigma_constant();
  for (int k = 0; k < N; ++k) {
    const Vector& x0 = path.nodes[static_cast<std::size_t>(k)];
    const Vector& x1 = path.nodes[static_cast<std::size_t>(k) + 1];
    m = 0.5 * (x0 + x1);
    sys.drift_into(m.data(), b.data());
    v = (x1 - x0) / dt - b;
    const Vector w = apply_a_inv(sys, m, v);   // w = a^{-1} v
    const Matrix Db = sys.drift_jacobian(m);

    // d(term_k)/dx_j = dt * (dv/dx_j)^T w + (midpoint chain through a^{-1}):
    //   dv/dx_k     = -I/dt - Db/2,   dv/dx_{k+1} = I/dt - Db/2,
    //   d/dx_{j,c} [v^T a^{-1} v] via m adds -(1/2) w^T (da/dx_c) w.
    const Vector common = -(0.5 * dt) * (Db.transpose() * w);
    Vector a_term = Vector::Zero(d);
    if (var_a) {
      for (int c = 0; c < d; ++c)
        a_term[c] = -(0.25 * dt) * w.dot(sys.a_partial(m, c) * w);
    }
    if (k >= 1) grad[static_cast<std::size_t>(k) - 1] += -w + common + a_term;
    if (k + 1 <= N - 1) grad[static_cast<std::size_t>(k)] += w + common + a_term;
  }
  return grad;
}

ControlTrajectory reverse_to_control(const SystemSpec& sys, const DiscretePath& path) {
  path.validate();
  const int N = path.segments();
  const double dt = path.dt();
  ControlTrajectory traj;
  traj.horizon = path.horizon;
  traj.states.reserve(static_cast<std::size_t>(N) + 1);
  for (int k = N; k >= 0; --k) traj.states.push_back(path.nodes[static_cast<std::size_t>(k)]);

  Vector m(path.dim()), b(path.dim());
  traj.controls.reserve(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    const Vector& y0 = traj.states[static_cast<std::size_t>(k)];
    const Vector& y1 = traj.states[static_cast<std::size_t>(k) + 1];
    m = 0.5 * (y0 + y1);
    sys.drift_into(m.data(), b.data());
    traj.controls.push_back(-(y1 - y0) / dt - b);
  }
  return traj;
}

double control_cost(const SystemSpec& sys, const ControlTrajectory& traj) {
  const int N = static_cast<int>(traj.controls.size());
  const double dt = traj.horizon / N;
  double total = 0.0;
  for (int k = 0; k < N; ++k) {
    const Vector m = 0.5 * (traj.states[static_cast<std::size_t>(k)] +
                            traj.states[static_cast<std::size_t>(k) + 1]);
    const Vector& u = traj.controls[static_cast<std::size_t>(k)];
    total += 0.5 * dt * u.dot(apply_a_inv(sys, m, u));
  }
  return total;
}

double control_dynamics_residual(const SystemSpec& sys, const ControlTrajectory& traj) {
  const int N = static_cast<int>(traj.controls.size());
  const double dt = traj.horizon / N;
  double worst = 0.0;
  Vector b(static_cast<int>(traj.states[0].size()));
  for (int k = 0; k < N; ++k) {
    const Vector& y0 = traj.states[static_cast<std::size_t>(k)];
    const Vector& y1 = traj.states[static_cast<std::size_t>(k) + 1];
    const Vector m = 0.5 * (y0 + y1);
    sys.drift_into(m.data(), b.data());
    worst = std::max(
        worst, ((y1 - y0) / dt + b + traj.controls[static_cast<std::size_t>(k)]).norm());
  }
  return worst;
}

}  // namespace qp
