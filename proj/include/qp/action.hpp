#pragma once

#include "qp/path.hpp"
#include "qp/system.hpp"

namespace qp {

// Midpoint-rule discretization of the Freidlin-Wentzell action
//   S = 1/2 int (phidot - b)^T a^{-1} (phidot - b) dt:
//   S_N = sum_k (dt/2) v_k^T a^{-1}(m_k) v_k,
// with v_k = (phi_{k+1}-phi_k)/dt - b(m_k) and m_k the segment midpoint.
// Nonnegative; zero iff every segment satisfies the discrete flow.
double path_action(const SystemSpec& sys, const DiscretePath& path);

// Exact gradient of S_N with respect to each interior node (endpoints
// excluded); differentiates the discrete objective, not Euler-Lagrange.
std::vector<Vector> path_action_gradient(const SystemSpec& sys, const DiscretePath& path);

// Time reversal: y_k = phi_{N-k}, with u chosen so the midpoint control
// dynamics hold exactly. control_cost(reverse_to_control(p)) == path_action(p).
ControlTrajectory reverse_to_control(const SystemSpec& sys, const DiscretePath& path);

// sum_k (dt/2) u_k^T a^{-1}(y-midpoint_k) u_k.
double control_cost(const SystemSpec& sys, const ControlTrajectory& traj);

// Max-norm residual of the discrete control dynamics (zero by construction
// for trajectories produced by reverse_to_control).
double control_dynamics_residual(const SystemSpec& sys, const ControlTrajectory& traj);

}  // namespace qp
