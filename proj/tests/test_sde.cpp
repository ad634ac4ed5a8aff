#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "qp/graph.hpp"
#include "qp/mam.hpp"
#include "qp/sde.hpp"

using namespace qp;

namespace {
Vector v1(double x) {
  Vector v(1);
  v << x;
  return v;
}

SimOptions base_opts(double eps, std::int64_t steps, std::uint64_t seed, double dt = 1e-3) {
  SimOptions o;
  o.eps = eps;
  o.dt = dt;
  o.steps = steps;
  o.seed = seed;
  return o;
}
}  // namespace

TEST_CASE("eps = 0 reduces to deterministic Euler") {
  auto ou = SystemSpec::builtin("ou1d");
  SimOptions o = base_opts(0.0, 100, 1);
  o.x0 = v1(1.0);
  auto [traj, rep] = simulate_em_trajectory(ou, o);
  CHECK_FALSE(rep.aborted);
  double x = 1.0;
  for (int k = 0; k < 100; ++k) {
    x += o.dt * (-x);
    CHECK(traj(k + 1, 0) == doctest::Approx(x).epsilon(1e-15));
  }
}

TEST_CASE("identical seeds give bit-identical trajectories") {
  auto dw = SystemSpec::builtin("doublewell1d");
  SimOptions o = base_opts(0.4, 5000, 99);
  o.x0 = v1(-1.0);
  auto [a, ra] = simulate_em_trajectory(dw, o);
  auto [b, rb] = simulate_em_trajectory(dw, o);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  SimOptions o2 = o;
  o2.seed = 100;
  auto [c, rc] = simulate_em_trajectory(dw, o2);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("non-finite state aborts with the step index") {
  auto dw = SystemSpec::builtin("doublewell1d");
  SimOptions o = base_opts(0.0, 1000, 0, 1.0);   // dt = 1 is wildly unstable here
  o.x0 = v1(1.99);
  auto [traj, rep] = simulate_em_trajectory(dw, o);
  CHECK(rep.aborted);
  CHECK(rep.abort_step >= 0);
  CHECK(rep.dt_warning);   // dt * Lipschitz scale >> 0.5
}

TEST_CASE("OU stationary sample variance approaches eps^2/2") {
  auto ou = SystemSpec::builtin("ou1d");
  SimOptions o = base_opts(0.3, 4000000, 7);
  const std::int64_t burn = o.burn_steps();
  double s1 = 0.0, s2 = 0.0;
  std::int64_t n = 0;
  simulate_em_stream(ou, o, [&](std::int64_t k, const double* x) {
    if (k < burn) return;
    s1 += x[0];
    s2 += x[0] * x[0];
    ++n;
  });
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  CHECK(var == doctest::Approx(0.045).epsilon(0.10));
}

TEST_CASE("density estimate: normalization and reliability") {
  auto ou = SystemSpec::builtin("ou1d");
  auto est = estimate_invariant_density(ou, base_opts(0.3, 1000000, 5), 100);
  std::uint64_t total = est.escaped;
  for (auto c : est.counts) total += c;
  CHECK(total == est.total_retained);
  // sum of bin probabilities + escape fraction = 1 (to 1e-12)
  double p = est.escape_fraction();
  for (int b = 0; b < est.flat_bins(); ++b) p += est.density(b) * est.bin_volume();
  CHECK(p == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(est.reliable());
}

TEST_CASE("OU histogram matches the Gaussian stationary density near the mode") {
  auto ou = SystemSpec::builtin("ou1d");
  const double eps = 0.3;
  auto est = estimate_invariant_density(ou, base_opts(eps, 10000000, 21), 100);
  const double sigma = eps / std::sqrt(2.0);
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
  for (int b = 0; b < est.flat_bins(); ++b) {
    const double x = est.bin_center(b)[0];
    if (std::abs(x) > sigma) continue;
    const double expected = norm * std::exp(-x * x / (2.0 * sigma * sigma));
    CHECK(est.density(b) == doctest::Approx(expected).epsilon(0.10));
  }
}

TEST_CASE("symmetric double well: equal well masses within batch error") {
  auto dw = SystemSpec::builtin("doublewell1d");
  SimOptions o = base_opts(0.45, 8000000, 11, 2e-3);
  o.x0 = v1(-1.0);
  const std::int64_t burn = o.burn_steps();
  // batch means of the left-right occupation difference
  const int B = 32;
  const std::int64_t per = (o.steps - burn) / B;
  std::vector<double> diff(B, 0.0);
  simulate_em_stream(dw, o, [&](std::int64_t k, const double* x) {
    if (k < burn) return;
    const std::int64_t b = std::min<std::int64_t>((k - burn) / per, B - 1);
    diff[static_cast<std::size_t>(b)] += x[0] < 0.0 ? 1.0 : -1.0;
  });
  for (auto& d : diff) d /= static_cast<double>(per);
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= B;
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  const double se = std::sqrt(var / (B - 1.0) / B);
  CHECK(std::abs(mean) < 3.0 * se + 0.02);
}

TEST_CASE("log transform: zero at the mode, missing bins stay missing") {
  auto ou = SystemSpec::builtin("ou1d");
  auto est = estimate_invariant_density(ou, base_opts(0.3, 2000000, 3), 200);
  auto wf = log_transform(est);
  double wmin = 1e30;
  int defined = 0, missing = 0;
  for (const auto& w : wf.W) {
    if (w) {
      wmin = std::min(wmin, *w);
      ++defined;
    } else {
      ++missing;
    }
  }
  CHECK(wmin == doctest::Approx(0.0));
  CHECK(defined > 0);
  CHECK(missing > 0);   // far tails of the box are never visited at eps = 0.3
  int mode = 0;
  for (int b = 0; b < est.flat_bins(); ++b)
    if (est.counts[static_cast<std::size_t>(b)] > est.counts[static_cast<std::size_t>(mode)])
      mode = b;
  CHECK(*wf.W[static_cast<std::size_t>(mode)] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("log transform reproduces W = x^2 where the tail is sampled") {
  auto ou = SystemSpec::builtin("ou1d");
  const double eps = 0.3;
  auto est = estimate_invariant_density(ou, base_opts(eps, 20000000, 17, 2e-3), 80);
  auto wf = log_transform(est);
  // probe x = 0.5: W = 0.25, about e^{-2.8} suppression at eps = 0.3
  int bin = -1;
  for (int b = 0; b < est.flat_bins(); ++b)
    if (std::abs(est.bin_center(b)[0] - 0.5) <= 0.5 * est.box.width(0) / est.bins[0])
      bin = b;
  REQUIRE(bin >= 0);
  REQUIRE(wf.W[static_cast<std::size_t>(bin)].has_value());
  CHECK(*wf.W[static_cast<std::size_t>(bin)] == doctest::Approx(0.25).epsilon(0.15));
}

TEST_CASE("epsilon ladder: W-hat error does not grow as eps decreases") {
  auto ou = SystemSpec::builtin("ou1d");
  auto w_at_half = [&](double eps, std::uint64_t seed) {
    auto est = estimate_invariant_density(ou, base_opts(eps, 10000000, seed, 2e-3), 80);
    auto wf = log_transform(est);
    for (int b = 0; b < est.flat_bins(); ++b)
      if (std::abs(est.bin_center(b)[0] - 0.5) <= 0.025)
        return wf.W[static_cast<std::size_t>(b)];
    return std::optional<double>{};
  };
  auto w5 = w_at_half(0.5, 31);
  auto w3 = w_at_half(0.3, 32);
  REQUIRE(w5.has_value());
  REQUIRE(w3.has_value());
  CHECK(std::abs(*w3 - 0.25) <= std::abs(*w5 - 0.25) + 0.05);
}

TEST_CASE("ball_measure: symmetric wells, whole-box ball, disjointness") {
  auto dw = SystemSpec::builtin("doublewell1d");
  SimOptions o = base_opts(0.45, 8000000, 13, 2e-3);
  o.x0 = v1(-1.0);
  auto balls = ball_measure(dw, o, {v1(-1.0), v1(1.0)}, 0.2);
  REQUIRE(balls.size() == 2);
  REQUIRE(balls[0].exponent.has_value());
  REQUIRE(balls[1].exponent.has_value());
  CHECK(std::abs(*balls[0].exponent - *balls[1].exponent) < 0.05);

  // one huge ball catches everything retained inside the box
  auto whole = ball_measure(dw, o, {v1(0.0)}, 10.0);
  CHECK(whole[0].fraction == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(*whole[0].exponent == doctest::Approx(0.0).epsilon(1e-6));

  CHECK_THROWS_AS(ball_measure(dw, o, {v1(-0.1), v1(0.1)}, 0.2), std::invalid_argument);
}

TEST_CASE("ball_measure exponent ordering matches the graph potentials") {
  auto adw = SystemSpec::builtin("asymdoublewell1d");
  auto eqs = find_equilibria(adw, 100, 1e-10);
  REQUIRE(eqs.size() == 3);
  MamOptions mopts;
  auto pair = pair_cost_matrix(adw, eqs, mopts);
  auto graph = equilibrium_potentials(pair.costs);
  // stable wells: index 0 (shallow, W > 0) and 2 (deep, W = 0)
  const double w_shallow = *graph.W[0];
  const double w_deep = *graph.W[2];
  CHECK(w_deep == doctest::Approx(0.0));
  CHECK(w_shallow > 0.1);

  SimOptions o = base_opts(0.25, 10000000, 2);
  o.x0 = eqs[0].location;   // start in the shallow well
  auto balls = ball_measure(adw, o, {eqs[0].location, eqs[2].location}, 0.2);
  const double e_shallow = balls[0].exponent.value_or(balls[0].exponent_bound);
  const double e_deep = balls[1].exponent.value_or(balls[1].exponent_bound);
  CHECK(e_shallow > e_deep);   // ordering of -eps^2 ln mu(B) follows W_i
}

TEST_CASE("hitting times: zero at the target, OU flow time, bounded in eps") {
  auto ou = SystemSpec::builtin("ou1d");
  SimOptions o = base_opts(0.05, 1000, 4);
  auto zero = hitting_time_stats(ou, o, v1(0.05), {{v1(0.0), 0.1}}, 10, 5.0);
  CHECK(zero.mean == doctest::Approx(0.0));
  CHECK(zero.censored == 0);

  // deterministic flow time from 1 to 0.1 is ln 10
  auto st = hitting_time_stats(ou, o, v1(1.0), {{v1(0.0), 0.1}}, 50, 50.0);
  CHECK(st.censored == 0);
  CHECK(st.mean == doctest::Approx(std::log(10.0)).epsilon(0.10));

  // uniform-in-eps boundedness on a ladder
  for (double eps : {0.3, 0.2, 0.1}) {
    SimOptions oe = base_opts(eps, 1000, 4);
    auto s = hitting_time_stats(ou, oe, v1(1.0), {{v1(0.0), 0.1}}, 30, 100.0);
    CHECK(s.censored == 0);
    CHECK(s.mean < 1.5 * std::log(10.0));
  }

  // all-censored is an explicit status
  auto teleport = hitting_time_stats(ou, o, v1(1.0), {{v1(-1.9), 0.01}}, 5, 0.01);
  CHECK(teleport.all_censored);
}

TEST_CASE("stationarity residual: generator averages vanish within 3 se") {
  for (const char* name : {"ou1d", "doublewell1d"}) {
    auto sys = SystemSpec::builtin(name);
    SimOptions o = base_opts(0.35, 3000000, 23);
    o.x0 = v1(std::string(name) == "ou1d" ? 0.0 : -1.0);
    for (const ScalarField& f : {ScalarField::gaussian_bump(), ScalarField::norm2()}) {
      auto g = generator_average(sys, o, f);
      INFO(name, " ", f.describe(), " mean=", g.mean, " se=", g.se);
      CHECK(std::abs(g.mean) < 3.0 * g.se);
    }
  }
}

TEST_CASE("Lyapunov witness: generator of |x|^2 negative far out, average near zero") {
  auto ou = SystemSpec::builtin("ou1d");
  const double eps = 0.3;
  for (double x : {0.5, 1.0, 1.8})   // outside |x| > eps/sqrt(2)
    CHECK(apply_generator(ou, ScalarField::norm2(), v1(x), eps) < 0.0);
  SimOptions o = base_opts(eps, 2000000, 29);
  auto g = generator_average(ou, o, ScalarField::norm2());
  CHECK(std::abs(g.mean) < 3.0 * g.se);
}

TEST_CASE("statistics are pure functions of (system, opts, seed)") {
  auto dw = SystemSpec::builtin("doublewell1d");
  SimOptions o = base_opts(0.4, 200000, 77);
  o.x0 = v1(-1.0);
  auto e1 = estimate_invariant_density(dw, o, 50);
  auto e2 = estimate_invariant_density(dw, o, 50);
  CHECK(e1.counts == e2.counts);
  CHECK(e1.escaped == e2.escaped);
  auto h1 = hitting_time_stats(dw, o, v1(-1.0), {{v1(1.0), 0.2}}, 8, 200.0);
  auto h2 = hitting_time_stats(dw, o, v1(-1.0), {{v1(1.0), 0.2}}, 8, 200.0);
  CHECK(h1.times == h2.times);
  CHECK(h1.censored == h2.censored);
}

TEST_CASE("escape counting: leaky box flags the estimate") {
  auto sys = SystemSpec::from_expressions(1, {"0"}, SigmaSpec{}, Box{{{-0.5, 0.5}}});
  SimOptions o = base_opts(1.0, 200000, 5);
  auto est = estimate_invariant_density(sys, o, 20);
  CHECK(est.escape_fraction() > 0.05);
  CHECK_FALSE(est.reliable());
}
