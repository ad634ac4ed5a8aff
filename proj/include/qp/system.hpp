#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qp/expr.hpp"

namespace qp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Axis-aligned domain box. All grids, equilibrium searches and assumption
// samples live inside it.
struct Box {
  std::vector<std::array<double, 2>> bounds;

  int dim() const { return static_cast<int>(bounds.size()); }
  double lo(int i) const { return bounds[static_cast<std::size_t>(i)][0]; }
  double hi(int i) const { return bounds[static_cast<std::size_t>(i)][1]; }
  double width(int i) const { return hi(i) - lo(i); }
  double diameter() const;
  Vector center() const;
  bool contains(const Vector& x) const;
  void validate() const;  // throws std::invalid_argument on lo >= hi
};

// Diffusion factor descriptor sigma(x), a d x m matrix (default identity, m=d).
struct SigmaSpec {
  enum class Kind { Identity, Scale, Diag, Matrix };
  Kind kind = Kind::Identity;
  double scale = 1.0;                // Kind::Scale
  std::vector<Expression> entries;   // Diag: d entries; Matrix: row-major d*m
  int cols = 0;                      // m; 0 means m = d
};

// A diffusion system dX = b(X) dt + eps * sigma(X) dB on a domain box.
// Immutable after construction; all evaluation methods are pure and reentrant.
class SystemSpec {
 public:
  // Built-in registry: ou1d, doublewell1d, asymdoublewell1d (param "shift"),
  // linear2d (param "A", 2x2 matrix), gradient2d. Unknown names throw.
  static SystemSpec builtin(const std::string& name,
                            const nlohmann::json& params = nlohmann::json::object());

  // Component-wise expression drift (strings in x1..xd) with a sigma descriptor.
  static SystemSpec from_expressions(int dim, const std::vector<std::string>& drift,
                                     SigmaSpec sigma, Box box);

  // JSON descriptor: either {"name": ..., ...params} for a built-in, or
  // {"dimension": d, "drift": [...], "sigma": ..., "box": [[lo,hi],...]}.
  // A bare JSON string is shorthand for a built-in name.
  static SystemSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  int dim() const { return dim_; }
  int noise_dim() const { return m_; }
  const Box& box() const { return box_; }
  const std::string& name() const { return name_; }

  Vector drift(const Vector& x) const;
  void drift_into(const double* x, double* out) const { drift_fn_(x, out); }

  Matrix sigma(const Vector& x) const;
  Matrix a(const Vector& x) const;       // sigma sigma^T, must be SPD
  Matrix a_inv(const Vector& x) const;   // throws std::domain_error if a is not SPD

  bool sigma_constant() const { return sigma_constant_; }
  bool sigma_identity() const { return sigma_.kind == SigmaSpec::Kind::Identity; }

  bool has_analytic_jacobian() const { return static_cast<bool>(jac_fn_); }
  // Analytic Jacobian when registered, central finite differences otherwise
  // (step h = cbrt(machine eps) * max(1,|x_k|) per axis).
  Matrix drift_jacobian(const Vector& x) const;

  // d a / d x_axis; exactly zero for constant sigma, central FD otherwise.
  Matrix a_partial(const Vector& x, int axis) const;

  // Samples the box (low-discrepancy points plus corners): drift and sigma
  // finite everywhere, a(x) SPD. Throws std::domain_error on violation.
  void validate() const;

 private:
  SystemSpec() = default;

  int dim_ = 0;
  int m_ = 0;
  Box box_;
  std::string name_;
  std::function<void(const double*, double*)> drift_fn_;
  std::function<void(const double*, double*)> jac_fn_;  // row-major d*d, optional
  SigmaSpec sigma_;
  bool sigma_constant_ = true;
  std::vector<std::string> drift_text_;   // expression systems: round-trip source
  nlohmann::json builtin_params_;         // built-ins: round-trip params
};

// Low-discrepancy (Halton) points inside a box; deterministic.
std::vector<Vector> halton_points(const Box& box, int n);

// Central-difference step for first derivatives.
inline double fd_step(double coord) {
  return 6.055454452393343e-06 * std::max(1.0, std::abs(coord));  // cbrt(eps) scaled
}

}  // namespace qp
