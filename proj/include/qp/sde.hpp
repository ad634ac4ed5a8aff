#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qp/dynamics.hpp"
#include "qp/rng.hpp"
#include "qp/system.hpp"

namespace qp {

struct SimOptions {
  double eps = 0.3;
  double dt = 1e-3;
  std::int64_t steps = 1'000'000;
  double burn_in = 0.1;        // fraction of steps discarded
  std::uint64_t seed = 0;
  Vector x0;                   // empty: origin

  void validate() const;
  std::int64_t burn_steps() const {
    return static_cast<std::int64_t>(burn_in * static_cast<double>(steps));
  }
};

struct SimReport {
  bool aborted = false;            // non-finite state encountered
  std::int64_t abort_step = -1;
  bool dt_warning = false;         // dt * (sampled Lipschitz scale of b) >= 0.5
  Vector final_state;
};

// Sampled Lipschitz scale of the drift on the box (max Jacobian 2-norm over a
// Halton sample); backs the SimOptions stability warning.
double drift_lipschitz_estimate(const SystemSpec& sys);

// Euler-Maruyama: X_{k+1} = X_k + b(X_k) dt + eps * sigma(X_k) * sqrt(dt) * xi_k,
// xi_k iid standard normal from GaussianStream(opts.seed), drawn component-wise
// per step. eps = 0 reduces to deterministic Euler. The visitor is called after
// every step as visit(step_index, state_ptr); identical seeds give bit-identical
// trajectories. Streams stop early when the state leaves IEEE range.
template <typename Visitor>
SimReport simulate_em_stream(const SystemSpec& sys, const SimOptions& opts, Visitor&& visit) {
  opts.validate();
  const int d = sys.dim();
  Vector x = opts.x0.size() == 0 ? Vector::Zero(d) : opts.x0;
  if (static_cast<int>(x.size()) != d)
    throw std::invalid_argument("x0 dimension mismatch");

  SimReport rep;
  rep.dt_warning = opts.dt * drift_lipschitz_estimate(sys) >= 0.5;

  GaussianStream gauss(opts.seed);
  const double root_dt = std::sqrt(opts.dt);
  const double noise_scale = opts.eps * root_dt;
  Vector b(d), xi(sys.noise_dim());
  const bool identity_sigma = sys.sigma_identity();

  for (std::int64_t k = 0; k < opts.steps; ++k) {
    sys.drift_into(x.data(), b.data());
    if (opts.eps == 0.0) {
      x.noalias() += opts.dt * b;
    } else if (identity_sigma) {
      for (int i = 0; i < d; ++i) x[i] += opts.dt * b[i] + noise_scale * gauss.next();
    } else {
      for (int i = 0; i < sys.noise_dim(); ++i) xi[i] = gauss.next();
      x.noalias() += opts.dt * b + noise_scale * (sys.sigma(x) * xi);
    }
    if (!x.allFinite()) {
      rep.aborted = true;
      rep.abort_step = k;
      rep.final_state = x;
      return rep;
    }
    visit(k, x.data());
  }
  rep.final_state = x;
  return rep;
}

// Full trajectory (states after each step, plus the initial state in row 0).
// Intended for short runs and tests.
std::pair<Matrix, SimReport> simulate_em_trajectory(const SystemSpec& sys,
                                                    const SimOptions& opts);

// Occupation histogram over the domain box after burn-in (d <= 2).
// Out-of-box samples count as escapes, never clamped.
struct DensityEstimate {
  Box box;
  int dim = 1;
  std::array<int, 2> bins{1, 1};
  std::vector<std::uint64_t> counts;
  std::uint64_t total_retained = 0;   // all post-burn-in samples incl. escapes
  std::uint64_t escaped = 0;
  double eps = 0.0;
  SimReport report;

  double escape_fraction() const {
    return total_retained == 0 ? 0.0
                               : static_cast<double>(escaped) / static_cast<double>(total_retained);
  }
  bool reliable() const { return total_retained > 0 && escape_fraction() <= 0.05; }
  double bin_volume() const;
  double density(int flat) const;     // probability density estimate
  Vector bin_center(int flat) const;
  int flat_bins() const { return dim == 1 ? bins[0] : bins[0] * bins[1]; }
};

DensityEstimate estimate_invariant_density(const SystemSpec& sys, const SimOptions& opts,
                                           int bins_per_axis);

// W_hat = -eps^2 ln(density), shifted so the minimum over nonempty bins is 0.
// Empty bins are missing values, never +-inf.
struct WField {
  DensityEstimate geometry;               // counts retained for error bars
  std::vector<std::optional<double>> W;   // per bin
  double eps = 0.0;
};

WField log_transform(const DensityEstimate& estimate);

struct BallStat {
  Vector center;
  double rho = 0.0;
  std::uint64_t count = 0;
  double fraction = 0.0;
  std::optional<double> exponent;     // -eps^2 ln(fraction); missing when count = 0
  bool lower_bound = false;           // zero-count: exponent_bound is a lower bound
  double exponent_bound = 0.0;
};

// Occupation fractions of disjoint balls along one long trajectory.
std::vector<BallStat> ball_measure(const SystemSpec& sys, const SimOptions& opts,
                                   const std::vector<Vector>& centers, double rho1);

struct HittingStats {
  std::vector<double> times;   // uncensored first-entry times
  double mean = 0.0;
  double stddev = 0.0;
  double tmax = 0.0;
  int censored = 0;
  int runs = 0;
  bool all_censored = false;
};

// First-entry times into the union of target balls over n_runs independent
// runs (per-run seed = opts.seed XOR run index). Runs exceeding time_cap are
// censored: excluded from the mean but reported.
HittingStats hitting_time_stats(const SystemSpec& sys, const SimOptions& opts,
                                const Vector& start,
                                const std::vector<std::pair<Vector, double>>& targets,
                                int n_runs, double time_cap);

// Time average of L^eps f along the retained trajectory with a batch-means
// standard error (64 batches); the stationarity criterion expects
// |mean| < 3 * se.
struct GeneratorAverage {
  double mean = 0.0;
  double se = 0.0;
  int batches = 0;
  std::int64_t samples = 0;
};

GeneratorAverage generator_average(const SystemSpec& sys, const SimOptions& opts,
                                   const ScalarField& f, int stride = 10);

}  // namespace qp
