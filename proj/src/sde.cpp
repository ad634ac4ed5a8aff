#include "qp/sde.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qp/parallel.hpp"

namespace qp {

void SimOptions::validate() const {
  if (!(eps >= 0.0)) throw std::invalid_argument("eps must be nonnegative");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (steps < 1) throw std::invalid_argument("steps must be positive");
  if (!(burn_in >= 0.0 && burn_in < 1.0))
    throw std::invalid_argument("burn_in fraction must be in [0,1)");
}

double drift_lipschitz_estimate(const SystemSpec& sys) {
  double L = 0.0;
  for (const Vector& x : halton_points(sys.box(), 64))
    L = std::max(L, sys.drift_jacobian(x).operatorNorm());
  return L;
}

std::pair<Matrix, SimReport> simulate_em_trajectory(const SystemSpec& sys,
                                                    const SimOptions& opts) {
  const int d = sys.dim();
  Matrix traj(opts.steps + 1, d);
  traj.row(0) = (opts.x0.size() == 0 ? Vector::Zero(d) : opts.x0).transpose();
  SimReport rep = simulate_em_stream(sys, opts, [&](std::int64_t k, const double* x) {
    for (int i = 0; i < d; ++i) traj(k + 1, i) = x[i];
  });
  if (rep.aborted) traj.conservativeResize(rep.abort_step + 1, d);
  return {std::move(traj), std::move(rep)};
}

double DensityEstimate::bin_volume() const {
  double v = box.width(0) / bins[0];
  if (dim == 2) v *= box.width(1) / bins[1];
  return v;
}

double DensityEstimate::density(int flat) const {
  if (total_retained == 0) return 0.0;
  return static_cast<double>(counts[static_cast<std::size_t>(flat)]) /
         (static_cast<double>(total_retained) * bin_volume());
}

Vector DensityEstimate::bin_center(int flat) const {
  Vector c(dim);
  const int i = flat % bins[0];
  c[0] = box.lo(0) + (i + 0.5) * box.width(0) / bins[0];
  if (dim == 2) {
    const int j = flat / bins[0];
    c[1] = box.lo(1) + (j + 0.5) * box.width(1) / bins[1];
  }
  return c;
}

DensityEstimate estimate_invariant_density(const SystemSpec& sys, const SimOptions& opts,
                                           int bins_per_axis) {
  if (sys.dim() > 2)
    throw std::invalid_argument("density histograms support dimension <= 2");
  if (bins_per_axis < 1) throw std::invalid_argument("bins_per_axis must be positive");

  DensityEstimate est;
  est.box = sys.box();
  est.dim = sys.dim();
  est.bins = {bins_per_axis, est.dim == 2 ? bins_per_axis : 1};
  est.counts.assign(static_cast<std::size_t>(est.flat_bins()), 0);
  est.eps = opts.eps;

  const std::int64_t burn = opts.burn_steps();
  const double lo0 = est.box.lo(0), w0 = est.box.width(0);
  const double inv0 = bins_per_axis / w0;
  const double lo1 = est.dim == 2 ? est.box.lo(1) : 0.0;
  const double inv1 = est.dim == 2 ? bins_per_axis / est.box.width(1) : 0.0;
  const double hi0 = est.box.hi(0);
  const double hi1 = est.dim == 2 ? est.box.hi(1) : 0.0;
  const int nb = bins_per_axis;

  est.report = simulate_em_stream(sys, opts, [&](std::int64_t k, const double* x) {
    if (k < burn) return;
    ++est.total_retained;
    if (x[0] < lo0 || x[0] > hi0) {
      ++est.escaped;
      return;
    }
    int i = static_cast<int>((x[0] - lo0) * inv0);
    if (i >= nb) i = nb - 1;
    if (est.dim == 2) {
      if (x[1] < lo1 || x[1] > hi1) {
        ++est.escaped;
        return;
      }
      int j = static_cast<int>((x[1] - lo1) * inv1);
      if (j >= nb) j = nb - 1;
      ++est.counts[static_cast<std::size_t>(j * nb + i)];
    } else {
      ++est.counts[static_cast<std::size_t>(i)];
    }
  });
  return est;
}

WField log_transform(const DensityEstimate& estimate) {
  WField f;
  f.geometry = estimate;
  f.eps = estimate.eps;
  f.W.assign(static_cast<std::size_t>(estimate.flat_bins()), std::nullopt);
  double wmin = std::numeric_limits<double>::infinity();
  for (int b = 0; b < estimate.flat_bins(); ++b) {
    if (estimate.counts[static_cast<std::size_t>(b)] == 0) continue;
    const double w = -estimate.eps * estimate.eps * std::log(estimate.density(b));
    f.W[static_cast<std::size_t>(b)] = w;
    wmin = std::min(wmin, w);
  }
  if (std::isfinite(wmin))
    for (auto& w : f.W)
      if (w) *w -= wmin;   // normalize at the density peak: min W_hat = 0
  return f;
}

std::vector<BallStat> ball_measure(const SystemSpec& sys, const SimOptions& opts,
                                   const std::vector<Vector>& centers, double rho1) {
  if (!(rho1 > 0.0)) throw std::invalid_argument("rho1 must be positive");
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j)
      if ((centers[i] - centers[j]).norm() <= 2.0 * rho1)
        throw std::invalid_argument("ball_measure requires disjoint balls");

  const std::int64_t burn = opts.burn_steps();
  const int nc = static_cast<int>(centers.size());
  const int d = sys.dim();
  std::vector<std::uint64_t> hits(centers.size(), 0);
  std::uint64_t retained = 0;
  const double r2 = rho1 * rho1;

  simulate_em_stream(sys, opts, [&](std::int64_t k, const double* x) {
    if (k < burn) return;
    ++retained;
    for (int c = 0; c < nc; ++c) {
      double s = 0.0;
      const Vector& ctr = centers[static_cast<std::size_t>(c)];
      for (int i = 0; i < d; ++i) {
        const double dx = x[i] - ctr[i];
        s += dx * dx;
      }
      if (s <= r2) {
        ++hits[static_cast<std::size_t>(c)];
        break;   // balls are disjoint
      }
    }
  });

  std::vector<BallStat> out;
  for (int c = 0; c < nc; ++c) {
    BallStat s;
    s.center = centers[static_cast<std::size_t>(c)];
    s.rho = rho1;
    s.count = hits[static_cast<std::size_t>(c)];
    s.fraction = retained == 0 ? 0.0
                               : static_cast<double>(s.count) / static_cast<double>(retained);
    if (s.count > 0) {
      s.exponent = -opts.eps * opts.eps * std::log(s.fraction);
    } else {
      s.lower_bound = true;   // zero hits: the exponent is at least this large
      s.exponent_bound =
          -opts.eps * opts.eps * std::log(1.0 / std::max<double>(1.0, static_cast<double>(retained)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

HittingStats hitting_time_stats(const SystemSpec& sys, const SimOptions& opts,
                                const Vector& start,
                                const std::vector<std::pair<Vector, double>>& targets,
                                int n_runs, double time_cap) {
  if (n_runs < 1) throw std::invalid_argument("n_runs must be positive");
  if (!(time_cap > 0.0)) throw std::invalid_argument("time_cap must be positive");
  if (targets.empty()) throw std::invalid_argument("at least one target ball required");

  auto inside_any = [&](const double* x) {
    for (const auto& [c, rho] : targets) {
      double s = 0.0;
      for (int i = 0; i < static_cast<int>(c.size()); ++i) {
        const double dx = x[i] - c[i];
        s += dx * dx;
      }
      if (s <= rho * rho) return true;
    }
    return false;
  };

  std::vector<std::optional<double>> per_run(static_cast<std::size_t>(n_runs));
  const auto cap_steps = static_cast<std::int64_t>(std::ceil(time_cap / opts.dt));

  parallel_for(static_cast<std::size_t>(n_runs), [&](std::size_t run) {
    SimOptions ro = opts;
    ro.seed = substream_seed(opts.seed, run);
    ro.x0 = start;
    ro.steps = cap_steps;
    ro.burn_in = 0.0;
    if (inside_any(start.data())) {   // tau = 0
      per_run[run] = 0.0;
      return;
    }
    std::optional<double> hit;
    simulate_em_stream(sys, ro, [&](std::int64_t k, const double* x) {
      if (!hit && inside_any(x)) hit = static_cast<double>(k + 1) * ro.dt;
    });
    per_run[run] = hit;
  });

  HittingStats st;
  st.runs = n_runs;
  for (const auto& t : per_run) {
    if (t) st.times.push_back(*t);
    else ++st.censored;
  }
  st.all_censored = st.times.empty();
  if (!st.all_censored) {
    double sum = 0.0;
    for (double t : st.times) {
      sum += t;
      st.tmax = std::max(st.tmax, t);
    }
    st.mean = sum / static_cast<double>(st.times.size());
    double var = 0.0;
    for (double t : st.times) var += (t - st.mean) * (t - st.mean);
    st.stddev = st.times.size() > 1
                    ? std::sqrt(var / static_cast<double>(st.times.size() - 1))
                    : 0.0;
  }
  return st;
}

GeneratorAverage generator_average(const SystemSpec& sys, const SimOptions& opts,
                                   const ScalarField& f, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be positive");
  const std::int64_t burn = opts.burn_steps();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>((opts.steps - burn) / stride + 1));
  Vector xv(sys.dim());
  simulate_em_stream(sys, opts, [&](std::int64_t k, const double* x) {
    if (k < burn || (k - burn) % stride != 0) return;
    for (int i = 0; i < sys.dim(); ++i) xv[i] = x[i];
    values.push_back(apply_generator(sys, f, xv, opts.eps));
  });

  GeneratorAverage g;
  g.samples = static_cast<std::int64_t>(values.size());
  if (values.empty()) return g;
  g.batches = std::min<int>(64, static_cast<int>(values.size()));
  const std::size_t per = values.size() / static_cast<std::size_t>(g.batches);
  std::vector<double> means;
  double total = 0.0;
  for (int b = 0; b < g.batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += values[static_cast<std::size_t>(b) * per + i];
    means.push_back(s / static_cast<double>(per));
    total += s;
  }
  g.mean = total / static_cast<double>(per * static_cast<std::size_t>(g.batches));
  double var = 0.0;
  for (double m : means) var += (m - g.mean) * (m - g.mean);
  g.se = g.batches > 1
             ? std::sqrt(var / static_cast<double>(g.batches - 1) / static_cast<double>(g.batches))
             : 0.0;
  return g;
}

}  // namespace qp
