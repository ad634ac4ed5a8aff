#include "qp/system.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace qp {

double Box::diameter() const {
  double s = 0.0;
  for (const auto& b : bounds) s += (b[1] - b[0]) * (b[1] - b[0]);
  return std::sqrt(s);
}

Vector Box::center() const {
  Vector c(dim());
  for (int i = 0; i < dim(); ++i) c[i] = 0.5 * (lo(i) + hi(i));
  return c;
}

bool Box::contains(const Vector& x) const {
  for (int i = 0; i < dim(); ++i)
    if (x[i] < lo(i) || x[i] > hi(i)) return false;
  return true;
}

void Box::validate() const {
  if (bounds.empty()) throw std::invalid_argument("domain box is empty");
  for (const auto& b : bounds)
    if (!(b[0] < b[1]) || !std::isfinite(b[0]) || !std::isfinite(b[1]))
      throw std::invalid_argument("domain box bounds must be finite with lo < hi");
}

std::vector<Vector> halton_points(const Box& box, int n) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  const int d = box.dim();
  if (d > 10) throw std::invalid_argument("halton_points supports dimension <= 10");
  std::vector<Vector> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    Vector x(d);
    for (int i = 0; i < d; ++i) {
      const int base = primes[i];
      double f = 1.0, r = 0.0;
      int idx = k;
      while (idx > 0) {
        f /= base;
        r += f * (idx % base);
        idx /= base;
      }
      x[i] = box.lo(i) + r * box.width(i);
    }
    pts.push_back(std::move(x));
  }
  return pts;
}

namespace {

SigmaSpec sigma_from_json(const nlohmann::json& j, int dim) {
  SigmaSpec s;
  if (j.is_string()) {
    if (j.get<std::string>() != "identity")
      throw std::invalid_argument("sigma: unknown descriptor string '" +
                                  j.get<std::string>() + "' (expected \"identity\")");
    return s;
  }
  if (!j.is_object()) throw std::invalid_argument("sigma: expected string or object");
  if (j.size() != 1)
    throw std::invalid_argument("sigma: exactly one of scale/diag/matrix expected");
  if (j.contains("scale")) {
    s.kind = SigmaSpec::Kind::Scale;
    s.scale = j.at("scale").get<double>();
    if (!(s.scale > 0.0)) throw std::invalid_argument("sigma.scale must be positive");
    return s;
  }
  auto parse_entry = [dim](const nlohmann::json& e) {
    if (e.is_number()) return Expression::constant(e.get<double>());
    return Expression::parse(e.get<std::string>(), dim);
  };
  if (j.contains("diag")) {
    s.kind = SigmaSpec::Kind::Diag;
    const auto& arr = j.at("diag");
    if (!arr.is_array() || static_cast<int>(arr.size()) != dim)
      throw std::invalid_argument("sigma.diag must list one entry per dimension");
    for (const auto& e : arr) s.entries.push_back(parse_entry(e));
    return s;
  }
  if (j.contains("matrix")) {
    s.kind = SigmaSpec::Kind::Matrix;
    const auto& rows = j.at("matrix");
    if (!rows.is_array() || static_cast<int>(rows.size()) != dim)
      throw std::invalid_argument("sigma.matrix must have one row per dimension");
    s.cols = 0;
    for (const auto& row : rows) {
      if (!row.is_array()) throw std::invalid_argument("sigma.matrix rows must be arrays");
      if (s.cols == 0) s.cols = static_cast<int>(row.size());
      if (static_cast<int>(row.size()) != s.cols || s.cols < 1)
        throw std::invalid_argument("sigma.matrix rows must have equal positive length");
      for (const auto& e : row) s.entries.push_back(parse_entry(e));
    }
    return s;
  }
  throw std::invalid_argument("sigma: expected one of scale/diag/matrix");
}

nlohmann::json sigma_to_json(const SigmaSpec& s) {
  switch (s.kind) {
    case SigmaSpec::Kind::Identity:
      return "identity";
    case SigmaSpec::Kind::Scale:
      return nlohmann::json{{"scale", s.scale}};
    case SigmaSpec::Kind::Diag: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& e : s.entries) arr.push_back(e.text());
      return nlohmann::json{{"diag", arr}};
    }
    case SigmaSpec::Kind::Matrix: {
      nlohmann::json rows = nlohmann::json::array();
      const int d = static_cast<int>(s.entries.size()) / s.cols;
      for (int i = 0; i < d; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int jx = 0; jx < s.cols; ++jx)
          row.push_back(s.entries[static_cast<std::size_t>(i * s.cols + jx)].text());
        rows.push_back(row);
      }
      return nlohmann::json{{"matrix", rows}};
    }
  }
  return "identity";
}

bool sigma_is_constant(const SigmaSpec& s) {
  for (const auto& e : s.entries)
    if (!e.is_constant()) return false;
  return true;
}

Box box_from_json(const nlohmann::json& j, int dim) {
  Box box;
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw std::invalid_argument("box must list [lo,hi] per dimension");
  for (const auto& b : j) {
    if (!b.is_array() || b.size() != 2)
      throw std::invalid_argument("box entries must be [lo,hi] pairs");
    box.bounds.push_back({b[0].get<double>(), b[1].get<double>()});
  }
  box.validate();
  return box;
}

}  // namespace

SystemSpec SystemSpec::builtin(const std::string& name, const nlohmann::json& params) {
  SystemSpec s;
  s.name_ = name;
  s.builtin_params_ = params;

  auto reject_params = [&](std::initializer_list<const char*> allowed) {
    for (auto it = params.begin(); it != params.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed)
        if (it.key() == a) ok = true;
      if (!ok)
        throw std::invalid_argument("builtin '" + name + "': unknown parameter '" +
                                    it.key() + "'");
    }
  };

  if (name == "ou1d") {
    reject_params({});
    s.dim_ = 1;
    s.box_ = Box{{{-2.0, 2.0}}};
    s.drift_fn_ = [](const double* x, double* out) { out[0] = -x[0]; };
    s.jac_fn_ = [](const double*, double* out) { out[0] = -1.0; };
  } else if (name == "doublewell1d") {
    reject_params({});
    s.dim_ = 1;
    s.box_ = Box{{{-2.0, 2.0}}};
    s.drift_fn_ = [](const double* x, double* out) { out[0] = x[0] - x[0] * x[0] * x[0]; };
    s.jac_fn_ = [](const double* x, double* out) { out[0] = 1.0 - 3.0 * x[0] * x[0]; };
  } else if (name == "asymdoublewell1d") {
    reject_params({"shift"});
    const double shift = params.value("shift", 0.1);
    s.dim_ = 1;
    s.box_ = Box{{{-2.0, 2.0}}};
    s.drift_fn_ = [shift](const double* x, double* out) {
      out[0] = x[0] - x[0] * x[0] * x[0] + shift;
    };
    s.jac_fn_ = [](const double* x, double* out) { out[0] = 1.0 - 3.0 * x[0] * x[0]; };
    s.builtin_params_ = nlohmann::json{{"shift", shift}};
  } else if (name == "linear2d") {
    reject_params({"A"});
    Eigen::Matrix2d A;
    A << -1.0, 2.0, -2.0, -1.0;
    if (params.contains("A")) {
      const auto& ja = params.at("A");
      if (!ja.is_array() || ja.size() != 2 || ja[0].size() != 2 || ja[1].size() != 2)
        throw std::invalid_argument("linear2d: parameter A must be a 2x2 matrix");
      for (int i = 0; i < 2; ++i)
        for (int jx = 0; jx < 2; ++jx) A(i, jx) = ja[i][jx].get<double>();
    }
    s.dim_ = 2;
    s.box_ = Box{{{-2.0, 2.0}, {-2.0, 2.0}}};
    s.drift_fn_ = [A](const double* x, double* out) {
      out[0] = A(0, 0) * x[0] + A(0, 1) * x[1];
      out[1] = A(1, 0) * x[0] + A(1, 1) * x[1];
    };
    s.jac_fn_ = [A](const double*, double* out) {
      out[0] = A(0, 0); out[1] = A(0, 1); out[2] = A(1, 0); out[3] = A(1, 1);
    };
    s.builtin_params_ = nlohmann::json{{"A", {{A(0, 0), A(0, 1)}, {A(1, 0), A(1, 1)}}}};
  } else if (name == "gradient2d") {
    // b = -grad V with V = (x^2-1)^2/4 + y^2/2: wells at (+-1,0), saddle at (0,0).
    reject_params({});
    s.dim_ = 2;
    s.box_ = Box{{{-2.0, 2.0}, {-2.0, 2.0}}};
    s.drift_fn_ = [](const double* x, double* out) {
      out[0] = x[0] - x[0] * x[0] * x[0];
      out[1] = -x[1];
    };
    s.jac_fn_ = [](const double* x, double* out) {
      out[0] = 1.0 - 3.0 * x[0] * x[0]; out[1] = 0.0; out[2] = 0.0; out[3] = -1.0;
    };
  } else {
    throw std::invalid_argument("unknown builtin system '" + name + "'");
  }
  s.m_ = s.dim_;
  s.sigma_constant_ = true;
  return s;
}

SystemSpec SystemSpec::from_expressions(int dim, const std::vector<std::string>& drift,
                                        SigmaSpec sigma, Box box) {
  if (dim < 1) throw std::invalid_argument("dimension must be positive");
  if (static_cast<int>(drift.size()) != dim)
    throw std::invalid_argument("drift must list one expression per dimension");
  box.validate();
  if (box.dim() != dim) throw std::invalid_argument("box dimension mismatch");

  SystemSpec s;
  s.name_ = "expression";
  s.dim_ = dim;
  s.box_ = std::move(box);
  s.drift_text_ = drift;

  auto exprs = std::make_shared<std::vector<Expression>>();
  for (int i = 0; i < dim; ++i) {
    try {
      exprs->push_back(Expression::parse(drift[static_cast<std::size_t>(i)], dim));
    } catch (const ExprError& e) {
      throw std::invalid_argument("drift component " + std::to_string(i + 1) + ": " +
                                  e.what());
    }
  }
  s.drift_fn_ = [exprs, dim](const double* x, double* out) {
    std::span<const double> xs(x, static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) out[i] = (*exprs)[static_cast<std::size_t>(i)].eval(xs);
  };

  s.sigma_ = std::move(sigma);
  if (s.sigma_.kind == SigmaSpec::Kind::Matrix) {
    s.m_ = s.sigma_.cols;
    if (s.m_ < dim)
      throw std::invalid_argument("sigma must have at least d columns (full row rank)");
  } else {
    s.m_ = dim;
    if (s.sigma_.kind == SigmaSpec::Kind::Diag &&
        static_cast<int>(s.sigma_.entries.size()) != dim)
      throw std::invalid_argument("sigma.diag must list one entry per dimension");
  }
  s.sigma_constant_ = sigma_is_constant(s.sigma_);
  return s;
}

SystemSpec SystemSpec::from_json(const nlohmann::json& j) {
  if (j.is_string()) return builtin(j.get<std::string>());
  if (!j.is_object()) throw std::invalid_argument("system: expected string or object");

  if (j.contains("name")) {
    nlohmann::json params = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "name") params[it.key()] = it.value();
    return builtin(j.at("name").get<std::string>(), params);
  }

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "dimension" && k != "drift" && k != "sigma" && k != "box")
      throw std::invalid_argument("system: unknown key '" + k + "'");
  }
  if (!j.contains("dimension") || !j.contains("drift") || !j.contains("box"))
    throw std::invalid_argument("system: dimension, drift and box are required");

  const int dim = j.at("dimension").get<int>();
  std::vector<std::string> drift;
  for (const auto& e : j.at("drift")) drift.push_back(e.get<std::string>());
  SigmaSpec sigma;
  if (j.contains("sigma")) sigma = sigma_from_json(j.at("sigma"), dim);
  return from_expressions(dim, drift, std::move(sigma), box_from_json(j.at("box"), dim));
}

nlohmann::json SystemSpec::to_json() const {
  if (name_ != "expression") {
    nlohmann::json j{{"name", name_}};
    for (auto it = builtin_params_.begin(); it != builtin_params_.end(); ++it)
      j[it.key()] = it.value();
    return j;
  }
  nlohmann::json jbox = nlohmann::json::array();
  for (const auto& b : box_.bounds) jbox.push_back({b[0], b[1]});
  return nlohmann::json{{"dimension", dim_},
                        {"drift", drift_text_},
                        {"sigma", sigma_to_json(sigma_)},
                        {"box", jbox}};
}

Vector SystemSpec::drift(const Vector& x) const {
  Vector out(dim_);
  drift_fn_(x.data(), out.data());
  return out;
}

Matrix SystemSpec::sigma(const Vector& x) const {
  switch (sigma_.kind) {
    case SigmaSpec::Kind::Identity:
      return Matrix::Identity(dim_, m_);
    case SigmaSpec::Kind::Scale:
      return sigma_.scale * Matrix::Identity(dim_, m_);
    case SigmaSpec::Kind::Diag: {
      Matrix s = Matrix::Zero(dim_, m_);
      std::span<const double> xs(x.data(), static_cast<std::size_t>(dim_));
      for (int i = 0; i < dim_; ++i)
        s(i, i) = sigma_.entries[static_cast<std::size_t>(i)].eval(xs);
      return s;
    }
    case SigmaSpec::Kind::Matrix: {
      Matrix s(dim_, m_);
      std::span<const double> xs(x.data(), static_cast<std::size_t>(dim_));
      for (int i = 0; i < dim_; ++i)
        for (int jx = 0; jx < m_; ++jx)
          s(i, jx) = sigma_.entries[static_cast<std::size_t>(i * m_ + jx)].eval(xs);
      return s;
    }
  }
  return Matrix::Identity(dim_, m_);
}

Matrix SystemSpec::a(const Vector& x) const {
  if (sigma_identity()) return Matrix::Identity(dim_, dim_);
  const Matrix s = sigma(x);
  return s * s.transpose();
}

Matrix SystemSpec::a_inv(const Vector& x) const {
  if (sigma_identity()) return Matrix::Identity(dim_, dim_);
  const Matrix ax = a(x);
  Eigen::LLT<Matrix> llt(ax);
  if (llt.info() != Eigen::Success)
    throw std::domain_error(
        "a(x) = sigma sigma^T is not positive definite (degenerate diffusion "
        "violates the ellipticity assumption)");
  return llt.solve(Matrix::Identity(dim_, dim_));
}

Matrix SystemSpec::drift_jacobian(const Vector& x) const {
  Matrix J(dim_, dim_);
  if (jac_fn_) {
    jac_fn_(x.data(), J.data());
    // jac_fn_ writes row-major; Eigen default is column-major.
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        rm(J.data(), dim_, dim_);
    Matrix out = rm;
    return out;
  }
  Vector xp = x, xm = x, bp(dim_), bm(dim_);
  for (int k = 0; k < dim_; ++k) {
    const double h = fd_step(x[k]);
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    drift_fn_(xp.data(), bp.data());
    drift_fn_(xm.data(), bm.data());
    J.col(k) = (bp - bm) / (2.0 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return J;
}

Matrix SystemSpec::a_partial(const Vector& x, int axis) const {
  if (sigma_constant_) return Matrix::Zero(dim_, dim_);
  Vector xp = x, xm = x;
  const double h = fd_step(x[axis]);
  xp[axis] += h;
  xm[axis] -= h;
  return (a(xp) - a(xm)) / (2.0 * h);
}

void SystemSpec::validate() const {
  std::vector<Vector> pts = halton_points(box_, 128);
  pts.push_back(box_.center());
  // corners
  const int d = dim_;
  for (int mask = 0; mask < (1 << d); ++mask) {
    Vector c(d);
    for (int i = 0; i < d; ++i) c[i] = (mask >> i) & 1 ? box_.hi(i) : box_.lo(i);
    pts.push_back(std::move(c));
  }
  for (const Vector& x : pts) {
    const Vector b = drift(x);
    if (!b.allFinite())
      throw std::domain_error("drift is not finite at a sampled box point");
    const Matrix ax = a(x);
    if (!ax.allFinite())
      throw std::domain_error("sigma is not finite at a sampled box point");
    Eigen::SelfAdjointEigenSolver<Matrix> es(ax);
    if (es.eigenvalues().minCoeff() <= 0.0)
      throw std::domain_error(
          "a(x) is not positive definite at a sampled box point "
          "(ellipticity assumption violated)");
  }
}

}  // namespace qp
