#include "qp/dynamics.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qp/rng.hpp"

namespace qp {

const char* to_string(EquilibriumKind k) {
  switch (k) {
    case EquilibriumKind::Stable: return "stable";
    case EquilibriumKind::Unstable: return "unstable";
    case EquilibriumKind::Saddle: return "saddle";
  }
  return "?";
}

ScalarField ScalarField::norm2() {
  ScalarField f;
  f.kind_ = Kind::Norm2;
  f.describe_ = "|x|^2";
  return f;
}

ScalarField ScalarField::gaussian_bump() {
  ScalarField f;
  f.kind_ = Kind::Gauss;
  f.describe_ = "exp(-|x|^2)";
  return f;
}

ScalarField ScalarField::constant(double c) {
  ScalarField f;
  f.kind_ = Kind::Const;
  f.c_ = c;
  f.describe_ = "const";
  return f;
}

ScalarField ScalarField::expression(const std::string& text, int dim) {
  ScalarField f;
  f.kind_ = Kind::Expr;
  f.expr_ = Expression::parse(text, dim);
  f.describe_ = text;
  return f;
}

double ScalarField::value(const Vector& x) const {
  switch (kind_) {
    case Kind::Norm2: return x.squaredNorm();
    case Kind::Gauss: return std::exp(-x.squaredNorm());
    case Kind::Const: return c_;
    case Kind::Expr:
      return expr_->eval({x.data(), static_cast<std::size_t>(x.size())});
  }
  return 0.0;
}

Vector ScalarField::gradient(const Vector& x) const {
  const int d = static_cast<int>(x.size());
  switch (kind_) {
    case Kind::Norm2: return 2.0 * x;
    case Kind::Gauss: return -2.0 * std::exp(-x.squaredNorm()) * x;
    case Kind::Const: return Vector::Zero(d);
    case Kind::Expr: {
      Vector g(d), xp = x, xm = x;
      for (int k = 0; k < d; ++k) {
        const double h = fd_step(x[k]);
        xp[k] = x[k] + h;
        xm[k] = x[k] - h;
        g[k] = (value(xp) - value(xm)) / (2.0 * h);
        xp[k] = x[k];
        xm[k] = x[k];
      }
      return g;
    }
  }
  return Vector::Zero(d);
}

Matrix ScalarField::hessian(const Vector& x) const {
  const int d = static_cast<int>(x.size());
  switch (kind_) {
    case Kind::Norm2: return 2.0 * Matrix::Identity(d, d);
    case Kind::Gauss: {
      const double e = std::exp(-x.squaredNorm());
      return e * (4.0 * x * x.transpose() - 2.0 * Matrix::Identity(d, d));
    }
    case Kind::Const: return Matrix::Zero(d, d);
    case Kind::Expr: {
      Matrix H(d, d);
      const double f0 = value(x);
      Vector xa = x;
      for (int i = 0; i < d; ++i) {
        const double hi = fd_step(x[i]);
        xa[i] = x[i] + hi;
        const double fp = value(xa);
        xa[i] = x[i] - hi;
        const double fm = value(xa);
        xa[i] = x[i];
        H(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
        for (int j = i + 1; j < d; ++j) {
          const double hj = fd_step(x[j]);
          xa[i] = x[i] + hi; xa[j] = x[j] + hj;
          const double fpp = value(xa);
          xa[j] = x[j] - hj;
          const double fpm = value(xa);
          xa[i] = x[i] - hi;
          const double fmm = value(xa);
          xa[j] = x[j] + hj;
          const double fmp = value(xa);
          xa[i] = x[i]; xa[j] = x[j];
          H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
      }
      return H;
    }
  }
  return Matrix::Zero(d, d);
}

namespace {

// Damped Newton for b(x) = 0; returns the root when ||b|| <= tol.
std::optional<Vector> newton_root(const SystemSpec& sys, Vector x, double tol) {
  const int max_iter = 80;
  Vector b = sys.drift(x);
  for (int it = 0; it < max_iter; ++it) {
    if (!b.allFinite()) return std::nullopt;
    if (b.norm() <= tol) return x;
    const Matrix J = sys.drift_jacobian(x);
    Eigen::FullPivLU<Matrix> lu(J);
    if (!lu.isInvertible()) return std::nullopt;
    const Vector step = lu.solve(-b);
    double lambda = 1.0;
    const double b0 = b.norm();
    while (lambda >= 1e-12) {
      const Vector xn = x + lambda * step;
      const Vector bn = sys.drift(xn);
      if (bn.allFinite() && bn.norm() < (1.0 - 1e-4 * lambda) * b0) {
        x = xn;
        b = bn;
        break;
      }
      lambda *= 0.5;
    }
    if (lambda < 1e-12) return std::nullopt;
  }
  return b.norm() <= tol ? std::optional<Vector>(x) : std::nullopt;
}

EquilibriumKind classify(const Vector& eig_real) {
  const bool all_neg = (eig_real.array() < 0.0).all();
  const bool all_pos = (eig_real.array() > 0.0).all();
  if (all_neg) return EquilibriumKind::Stable;
  if (all_pos) return EquilibriumKind::Unstable;
  return EquilibriumKind::Saddle;
}

}  // namespace

std::vector<Equilibrium> find_equilibria(const SystemSpec& sys, int n_starts, double tol) {
  if (n_starts < 1) throw std::invalid_argument("n_starts must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");

  const double merge_tol = 1e-6 * sys.box().diameter();
  std::vector<Vector> roots;
  auto starts = halton_points(sys.box(), n_starts);
  starts.push_back(sys.box().center());

  for (const Vector& s : starts) {
    auto root = newton_root(sys, s, tol);
    if (!root || !sys.box().contains(*root)) continue;
    bool merged = false;
    for (const Vector& r : roots)
      if ((r - *root).norm() <= merge_tol) {
        merged = true;
        break;
      }
    if (!merged) roots.push_back(*root);
  }

  std::sort(roots.begin(), roots.end(), [](const Vector& a, const Vector& b) {
    for (int i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return a[i] < b[i];
    return false;
  });

  std::vector<Equilibrium> out;
  for (Vector& r : roots) {
    Equilibrium e;
    const Matrix J = sys.drift_jacobian(r);
    Eigen::EigenSolver<Matrix> es(J);
    Vector re = es.eigenvalues().real();
    std::sort(re.data(), re.data() + re.size());
    e.jacobian_eig_real = re;
    e.kind = classify(re);
    e.residual = sys.drift(r).norm();
    e.location = std::move(r);
    out.push_back(std::move(e));
  }
  return out;
}

AssumptionReport check_assumptions(const SystemSpec& sys, double alpha, double beta,
                                   int n_samples, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in (0,1]");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be positive");

  const int d = sys.dim();
  SplitMix64 rng(seed);
  AssumptionReport rep;

  // Ellipticity bounds: extremes over x of x^T a(y) x / |x|^2 are the
  // eigenvalue extremes of a(y); sample y over the box.
  double lam = std::numeric_limits<double>::infinity();
  double Lam = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_samples; ++k) {
    Vector y(d);
    for (int i = 0; i < d; ++i) y[i] = rng.uniform(sys.box().lo(i), sys.box().hi(i));
    Eigen::SelfAdjointEigenSolver<Matrix> es(sys.a(y));
    lam = std::min(lam, es.eigenvalues().minCoeff());
    Lam = std::max(Lam, es.eigenvalues().maxCoeff());
  }
  rep.lambda_hat = lam;
  rep.Lambda_hat = Lam;
  rep.ellipticity_ok = lam > 0.0;

  // Radial drift condition: worst-case bracket over sampled directions at
  // three radii up to the inscribed box radius.
  double r_box = std::numeric_limits<double>::infinity();
  for (int i = 0; i < d; ++i)
    r_box = std::min(r_box, 0.5 * sys.box().width(i));
  const int n_dirs = std::max(2 * d, 32);
  std::vector<Vector> dirs;
  for (int i = 0; i < d; ++i) {
    Vector e = Vector::Zero(d);
    e[i] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  GaussianStream gauss(seed ^ 0x5ca1ab1eULL);
  while (static_cast<int>(dirs.size()) < n_dirs) {
    Vector u(d);
    for (int i = 0; i < d; ++i) u[i] = gauss.next();
    if (u.norm() > 1e-12) dirs.push_back(u / u.norm());
  }
  for (double frac : {0.5, 0.75, 1.0}) {
    const double r = frac * r_box;
    double worst = -std::numeric_limits<double>::infinity();
    for (const Vector& u : dirs) {
      const Vector x = r * u;
      const double radial_drift = sys.drift(x).dot(u);
      worst = std::max(worst, alpha * Lam + std::pow(r, 1.0 - beta) * radial_drift);
    }
    rep.radial.push_back({r, worst});
  }
  rep.radial_ok = rep.radial.back().margin < 0.0;
  return rep;
}

double apply_generator(const SystemSpec& sys, const ScalarField& f, const Vector& x,
                       double eps) {
  const double first = sys.drift(x).dot(f.gradient(x));
  if (eps == 0.0) return first;
  const double second = (sys.a(x) * f.hessian(x)).trace();
  return first + 0.5 * eps * eps * second;
}

}  // namespace qp
