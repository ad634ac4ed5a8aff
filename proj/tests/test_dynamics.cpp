#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "qp/dynamics.hpp"
#include "qp/system.hpp"

using namespace qp;
using nlohmann::json;

namespace {
Vector v1(double x) {
  Vector v(1);
  v << x;
  return v;
}
Vector v2(double x, double y) {
  Vector v(2);
  v << x, y;
  return v;
}
}  // namespace

TEST_CASE("eval_drift on the built-ins") {
  auto ou = SystemSpec::builtin("ou1d");
  CHECK(ou.drift(v1(2.0))[0] == doctest::Approx(-2.0));

  auto dw = SystemSpec::builtin("doublewell1d");
  CHECK(dw.drift(v1(1.0))[0] == doctest::Approx(0.0));

  auto lin = SystemSpec::builtin("linear2d");   // A = [[-1,2],[-2,-1]]
  const Vector b = lin.drift(v2(1.0, 0.0));
  CHECK(b[0] == doctest::Approx(-1.0));
  CHECK(b[1] == doctest::Approx(-2.0));
}

TEST_CASE("expression system with evaluation failure context") {
  CHECK_THROWS_WITH_AS(
      SystemSpec::from_expressions(2, {"x1", "x2 +"}, SigmaSpec{}, Box{{{-1, 1}, {-1, 1}}}),
      doctest::Contains("drift component 2"), std::invalid_argument);
}

TEST_CASE("eval_a and eval_a_inv") {
  auto id2 = SystemSpec::from_expressions(2, {"-x1", "-x2"}, SigmaSpec{}, Box{{{-2, 2}, {-2, 2}}});
  CHECK(id2.a(v2(0.3, -0.7)).isApprox(Matrix::Identity(2, 2)));
  CHECK(id2.a_inv(v2(0.3, -0.7)).isApprox(Matrix::Identity(2, 2)));

  // sigma = diag(1,2) -> a = diag(1,4), a_inv = diag(1,0.25)
  auto dsys = SystemSpec::from_json(json{{"dimension", 2},
                                         {"drift", {"-x1", "-x2"}},
                                         {"sigma", {{"diag", {1.0, 2.0}}}},
                                         {"box", {{-2, 2}, {-2, 2}}}});
  const Matrix a = dsys.a(v2(0.5, 0.5));
  CHECK(a(0, 0) == doctest::Approx(1.0));
  CHECK(a(1, 1) == doctest::Approx(4.0));
  CHECK(a(0, 1) == doctest::Approx(0.0));
  const Matrix ai = dsys.a_inv(v2(0.5, 0.5));
  CHECK(ai(1, 1) == doctest::Approx(0.25));
  CHECK((ai * a).isApprox(Matrix::Identity(2, 2), 1e-10));

  // sigma(x) = sqrt(1+x^2) in 1D: a(1) = 2, a_inv(1) = 0.5
  auto ssys = SystemSpec::from_json(json{{"dimension", 1},
                                         {"drift", {"-x1"}},
                                         {"sigma", {{"diag", {"sqrt(1 + x1^2)"}}}},
                                         {"box", {{-2, 2}}}});
  CHECK(ssys.a(v1(1.0))(0, 0) == doctest::Approx(2.0));
  CHECK(ssys.a_inv(v1(1.0))(0, 0) == doctest::Approx(0.5));
  CHECK_FALSE(ssys.sigma_constant());

  // sampled SPD + symmetry invariant
  for (const Vector& x : halton_points(ssys.box(), 25)) {
    const Matrix ax = ssys.a(x);
    CHECK(ax.isApprox(ax.transpose()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(ax);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("system json round trip") {
  const json j{{"dimension", 1},
               {"drift", {"x1 - x1^3"}},
               {"sigma", "identity"},
               {"box", {{-2.5, 2.5}}}};
  auto sys = SystemSpec::from_json(j);
  CHECK(sys.to_json() == j);
  CHECK(SystemSpec::from_json(sys.to_json()).drift(v1(0.5))[0] ==
        doctest::Approx(0.5 - 0.125));

  auto lin = SystemSpec::builtin("linear2d");
  CHECK(SystemSpec::from_json(lin.to_json()).drift(v2(1, 0))[0] == doctest::Approx(-1.0));

  CHECK_THROWS_AS(SystemSpec::from_json(json{{"dimension", 1}}), std::invalid_argument);
  CHECK_THROWS_AS(SystemSpec::from_json(json{{"name", "nope"}}), std::invalid_argument);
}

TEST_CASE("find_equilibria: ou1d") {
  auto eqs = find_equilibria(SystemSpec::builtin("ou1d"), 50, 1e-10);
  REQUIRE(eqs.size() == 1);
  CHECK(eqs[0].location[0] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(eqs[0].kind == EquilibriumKind::Stable);
  CHECK(eqs[0].jacobian_eig_real[0] == doctest::Approx(-1.0));
  CHECK(eqs[0].residual <= 1e-10);
}

TEST_CASE("find_equilibria: doublewell1d roots and kinds") {
  auto eqs = find_equilibria(SystemSpec::builtin("doublewell1d"), 100, 1e-10);
  REQUIRE(eqs.size() == 3);
  CHECK(eqs[0].location[0] == doctest::Approx(-1.0));
  CHECK(eqs[1].location[0] == doctest::Approx(0.0));
  CHECK(eqs[2].location[0] == doctest::Approx(1.0));
  CHECK(eqs[0].kind == EquilibriumKind::Stable);
  CHECK(eqs[1].kind == EquilibriumKind::Unstable);
  CHECK(eqs[2].kind == EquilibriumKind::Stable);
}

TEST_CASE("find_equilibria: rotational linear2d") {
  auto eqs = find_equilibria(SystemSpec::builtin("linear2d"), 60, 1e-10);
  REQUIRE(eqs.size() == 1);
  CHECK(eqs[0].location.norm() == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(eqs[0].kind == EquilibriumKind::Stable);
  // eigenvalues -1 +- 2i: both real parts -1
  CHECK(eqs[0].jacobian_eig_real[0] == doctest::Approx(-1.0));
  CHECK(eqs[0].jacobian_eig_real[1] == doctest::Approx(-1.0));
}

TEST_CASE("find_equilibria: gradient system critical points, none missed") {
  auto eqs = find_equilibria(SystemSpec::builtin("gradient2d"), 200, 1e-10);
  REQUIRE(eqs.size() == 3);   // (-1,0) saddle(0,0) (1,0)
  CHECK(eqs[0].location.isApprox(v2(-1, 0), 1e-7));
  CHECK(eqs[1].location.norm() == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(eqs[2].location.isApprox(v2(1, 0), 1e-7));
  CHECK(eqs[1].kind == EquilibriumKind::Saddle);
}

TEST_CASE("find_equilibria: no roots is an explicit empty result") {
  auto sys = SystemSpec::from_expressions(1, {"1"}, SigmaSpec{}, Box{{{-1, 1}}});
  CHECK(find_equilibria(sys, 20, 1e-10).empty());
}

TEST_CASE("classification is invariant under positive drift scaling") {
  auto scaled = SystemSpec::from_expressions(1, {"3*(x1 - x1^3)"}, SigmaSpec{},
                                             Box{{{-2, 2}}});
  auto eqs = find_equilibria(scaled, 100, 1e-10);
  REQUIRE(eqs.size() == 3);
  CHECK(eqs[0].kind == EquilibriumKind::Stable);
  CHECK(eqs[1].kind == EquilibriumKind::Unstable);
  CHECK(eqs[2].kind == EquilibriumKind::Stable);
}

TEST_CASE("check_assumptions: identity sigma bounds") {
  auto rep = check_assumptions(SystemSpec::builtin("ou1d"), 1.0, 1.0, 200, 7);
  CHECK(rep.lambda_hat == doctest::Approx(1.0));
  CHECK(rep.Lambda_hat == doctest::Approx(1.0));
  CHECK(rep.ellipticity_ok);
  // radius 2 margin: 1 + b(2)*1 = -1 (hand evaluation of the bracket)
  REQUIRE(rep.radial.size() >= 3);
  CHECK(rep.radial.back().radius == doctest::Approx(2.0));
  CHECK(rep.radial.back().margin == doctest::Approx(-1.0));
  CHECK(rep.radial_ok);
  CHECK(rep.box_only);
}

TEST_CASE("check_assumptions: zero drift violates the radial condition") {
  auto sys = SystemSpec::from_expressions(1, {"0"}, SigmaSpec{}, Box{{{-2, 2}}});
  auto rep = check_assumptions(sys, 1.0, 1.0, 100, 3);
  CHECK(rep.radial.back().margin > 0.0);
  CHECK_FALSE(rep.radial_ok);
}

TEST_CASE("apply_generator examples") {
  auto ou = SystemSpec::builtin("ou1d");
  // f = |x|^2 at x=1, eps=0.1: b.grad f = -2, (eps^2/2) tr(a f'') = 0.01
  CHECK(apply_generator(ou, ScalarField::norm2(), v1(1.0), 0.1) ==
        doctest::Approx(-1.99).epsilon(1e-9));
  CHECK(apply_generator(ou, ScalarField::constant(5.0), v1(0.7), 0.3) ==
        doctest::Approx(0.0));
}

TEST_CASE("apply_generator with eps=0 equals the directional derivative") {
  auto dw = SystemSpec::builtin("doublewell1d");
  auto f = ScalarField::expression("sin(x1) + x1^2", 1);
  for (double x : {-1.3, -0.4, 0.2, 0.9, 1.7}) {
    const double lhs = apply_generator(dw, f, v1(x), 0.0);
    const double b = x - x * x * x;
    const double grad = std::cos(x) + 2.0 * x;
    CHECK(lhs == doctest::Approx(b * grad).epsilon(1e-6));
  }
}

TEST_CASE("Lyapunov bound: generator of |x|^2 is negative when b^T x is dominant") {
  auto ou = SystemSpec::builtin("ou1d");
  const double eps = 0.3;
  const int d = 1;
  const double Lambda = 1.0;
  for (double x : {0.8, 1.2, 1.9}) {
    const Vector xv = v1(x);
    const double bdotx = ou.drift(xv).dot(xv);
    if (bdotx < -0.5 * d * eps * eps * Lambda)
      CHECK(apply_generator(ou, ScalarField::norm2(), xv, eps) < 0.0);
  }
}
