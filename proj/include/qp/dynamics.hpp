#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qp/system.hpp"

namespace qp {

enum class EquilibriumKind { Stable, Unstable, Saddle };

const char* to_string(EquilibriumKind k);

struct Equilibrium {
  Vector location;
  Vector jacobian_eig_real;   // real parts, sorted ascending
  EquilibriumKind kind = EquilibriumKind::Saddle;
  double residual = 0.0;      // ||b(location)||
};

// Sampled verification of the standing assumptions, restricted to the domain
// box (the canonical polynomial drifts violate global boundedness, so the
// report is explicitly box-local).
struct AssumptionReport {
  double lambda_hat = 0.0;    // sampled min eigenvalue of a(y)
  double Lambda_hat = 0.0;    // sampled max eigenvalue of a(y)
  struct RadialSample {
    double radius;
    double margin;            // alpha*Lambda_hat + r^(1-beta) * max_dir b(x)^T x/|x|
  };
  std::vector<RadialSample> radial;   // >= 3 radii, increasing
  bool ellipticity_ok = false;        // lambda_hat > 0
  bool radial_ok = false;             // margin < 0 at the outermost radius
  bool box_only = true;               // assumptions checked on the box, not globally
};

// Scalar test function with value/gradient/Hessian. Built-ins |x|^2 and
// exp(-|x|^2) carry analytic derivatives; expression-defined fields use
// central finite differences.
class ScalarField {
 public:
  static ScalarField norm2();
  static ScalarField gaussian_bump();
  static ScalarField constant(double c);
  static ScalarField expression(const std::string& text, int dim);

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Matrix hessian(const Vector& x) const;
  const std::string& describe() const { return describe_; }

 private:
  enum class Kind { Norm2, Gauss, Const, Expr } kind_ = Kind::Const;
  double c_ = 0.0;
  std::optional<Expression> expr_;
  std::string describe_;
};

// Deduplicated roots of b(x) = 0 inside the domain box, found by damped
// Newton from a Halton start set and classified by Jacobian eigenvalues.
// An empty result means no roots were found (explicit, not an error).
std::vector<Equilibrium> find_equilibria(const SystemSpec& sys, int n_starts, double tol);

// Report-only check of the ellipticity and radial-drift assumptions.
AssumptionReport check_assumptions(const SystemSpec& sys, double alpha, double beta,
                                   int n_samples, std::uint64_t seed);

// L^eps f(x) = b(x).grad f + (eps^2/2) tr(a(x) hess f).
double apply_generator(const SystemSpec& sys, const ScalarField& f, const Vector& x,
                       double eps);

}  // namespace qp
