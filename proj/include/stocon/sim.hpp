#pragma once

// Euler–Maruyama integration of single trajectories, independent-noise pairs,
// noise-free/noisy pairs, and seeded ensembles with deterministic reduction.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "stocon/core.hpp"
#include "stocon/errors.hpp"
#include "stocon/parallel.hpp"
#include "stocon/rng.hpp"

namespace stocon::sim {

struct SimConfig {
  double dt = 1e-3;
  double t_max = 1.0;
  std::int64_t n_paths = 1;
  std::uint64_t master_seed = 0;
  std::int64_t record_stride = 1;
  /// Worker threads for ensembles. Affects speed only, never results.
  int workers = 1;

  void validate() const {
    require(std::isfinite(dt) && dt > 0.0, ErrorKind::kInvalidArgument,
            "dt must be positive");
    require(std::isfinite(t_max) && t_max > 0.0, ErrorKind::kInvalidArgument,
            "t_max must be positive");
    require(dt <= t_max, ErrorKind::kInvalidArgument, "dt must be <= t_max");
    require(t_max / dt < 4.0e18, ErrorKind::kInvalidArgument,
            "t_max/dt does not fit in an integer");
    require(n_paths >= 1, ErrorKind::kInvalidArgument, "n_paths must be >= 1");
    require(record_stride >= 1, ErrorKind::kInvalidArgument,
            "record_stride must be >= 1");
  }

  std::int64_t n_steps() const { return std::llround(t_max / dt); }
  std::int64_t n_records() const { return n_steps() / record_stride + 1; }
  double step_time(std::int64_t step) const {
    return static_cast<double>(step) * dt;
  }
  double record_time(std::int64_t k) const {
    return step_time(k * record_stride);
  }
  std::vector<double> record_times() const {
    std::vector<double> out(static_cast<std::size_t>(n_records()));
    for (std::int64_t k = 0; k < n_records(); ++k)
      out[static_cast<std::size_t>(k)] = record_time(k);
    return out;
  }
};

enum class PairMode {
  kPairNoisy,        // both trajectories noisy, independent Wiener processes
  kNoiseFreeVsNoisy  // trajectory a noise-free, b noisy
};

/// Mean and standard error of a per-path quantity on the record grid.
struct EnsemblePairStats {
  std::vector<double> times;
  std::vector<double> mean_sq_dist;
  std::vector<double> std_err;
  bool weighted_by_metric = false;
  std::int64_t n_paths = 0;

  std::size_t size() const { return times.size(); }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
};

struct TrajectoryPair {
  Trajectory a;
  Trajectory b;
};

/// Stream ids used for the two members of a pair. Tests may force them equal
/// to drive both trajectories with the same Wiener process.
struct PairStreams {
  std::uint32_t a = rng::kTrajectoryA;
  std::uint32_t b = rng::kTrajectoryB;
};

struct StepWorkspace {
  Vec f;
  Mat sigma;
  Vec dw;
};

inline void em_step_inplace(const SdeSystem& sys, Vec& x, double t, double dt,
                            const Vec& dw, StepWorkspace& ws) {
  sys.drift(x, t, ws.f);
  sys.diffusion(x, t, ws.sigma);
  x.noalias() += dt * ws.f;
  x.noalias() += ws.sigma * dw;
}

inline void drift_step_inplace(const SdeSystem& sys, Vec& x, double t,
                               double dt, StepWorkspace& ws) {
  sys.drift(x, t, ws.f);
  x.noalias() += dt * ws.f;
}

/// x + f(x,t)·dt + σ(x,t)·dw. `dw` holds the Wiener increments (N(0, dt)).
inline Vec em_step(const SdeSystem& sys, const Vec& x, double t, double dt,
                   const Vec& dw) {
  require(x.size() == sys.n() && dw.size() == sys.d(),
          ErrorKind::kDimensionMismatch, "em_step dimensions");
  StepWorkspace ws;
  Vec out = x;
  em_step_inplace(sys, out, t, dt, dw, ws);
  if (!out.allFinite())
    throw NonFiniteError(-1, t + dt, "Euler-Maruyama step produced NaN/Inf");
  return out;
}

namespace detail {

/// Integrates one trajectory and calls rec(k, x, t) at every record point.
/// A noise-free trajectory never touches its stream.
template <class Recorder>
void integrate(const SdeSystem& sys, const Vec& x0, const SimConfig& cfg,
               std::int64_t path_index, std::uint32_t stream_id, bool noisy,
               Recorder&& rec) {
  require(x0.size() == sys.n(), ErrorKind::kDimensionMismatch,
          "initial state dimension");
  rng::GaussianStream stream(cfg.master_seed,
                             static_cast<std::uint64_t>(path_index), stream_id);
  StepWorkspace ws;
  ws.dw.resize(sys.d());
  const double sqrt_dt = std::sqrt(cfg.dt);
  Vec x = x0;
  const std::int64_t steps = cfg.n_steps();
  rec(std::int64_t{0}, x, 0.0);
  for (std::int64_t i = 0; i < steps; ++i) {
    const double t = cfg.step_time(i);
    if (noisy) {
      stream.fill_normal(ws.dw);
      ws.dw *= sqrt_dt;
      em_step_inplace(sys, x, t, cfg.dt, ws.dw, ws);
    } else {
      drift_step_inplace(sys, x, t, cfg.dt, ws);
    }
    if (!x.allFinite()) {
      throw NonFiniteError(path_index, cfg.step_time(i + 1),
                           "trajectory blew up");
    }
    if ((i + 1) % cfg.record_stride == 0) {
      rec((i + 1) / cfg.record_stride, x, cfg.step_time(i + 1));
    }
  }
}

/// Pair integration in lockstep, calling rec(k, a, b, t) at record points.
template <class Recorder>
void integrate_pair(const SdeSystem& sys, const Vec& a0, const Vec& b0,
                    const SimConfig& cfg, std::int64_t path_index,
                    PairMode mode, PairStreams streams, Recorder&& rec) {
  require(a0.size() == sys.n() && b0.size() == sys.n(),
          ErrorKind::kDimensionMismatch, "initial state dimension");
  const auto pidx = static_cast<std::uint64_t>(path_index);
  rng::GaussianStream sa(cfg.master_seed, pidx, streams.a);
  rng::GaussianStream sb(cfg.master_seed, pidx, streams.b);
  StepWorkspace wa;
  StepWorkspace wb;
  wa.dw.resize(sys.d());
  wb.dw.resize(sys.d());
  const double sqrt_dt = std::sqrt(cfg.dt);
  const bool a_noisy = mode == PairMode::kPairNoisy;
  Vec a = a0;
  Vec b = b0;
  const std::int64_t steps = cfg.n_steps();
  rec(std::int64_t{0}, a, b, 0.0);
  for (std::int64_t i = 0; i < steps; ++i) {
    const double t = cfg.step_time(i);
    if (a_noisy) {
      sa.fill_normal(wa.dw);
      wa.dw *= sqrt_dt;
      em_step_inplace(sys, a, t, cfg.dt, wa.dw, wa);
    } else {
      drift_step_inplace(sys, a, t, cfg.dt, wa);
    }
    sb.fill_normal(wb.dw);
    wb.dw *= sqrt_dt;
    em_step_inplace(sys, b, t, cfg.dt, wb.dw, wb);
    if (!a.allFinite() || !b.allFinite()) {
      throw NonFiniteError(path_index, cfg.step_time(i + 1),
                           "pair trajectory blew up");
    }
    if ((i + 1) % cfg.record_stride == 0) {
      rec((i + 1) / cfg.record_stride, a, b, cfg.step_time(i + 1));
    }
  }
}

struct Moments {
  std::int64_t count = 0;
  Mat mean;  // series × records
  Mat m2;
};

inline void merge_into(Moments& acc, const Moments& other) {
  if (other.count == 0) return;
  if (acc.count == 0) {
    acc = other;
    return;
  }
  const double na = static_cast<double>(acc.count);
  const double nb = static_cast<double>(other.count);
  const double n = na + nb;
  const Mat delta = other.mean - acc.mean;
  acc.mean += delta * (nb / n);
  acc.m2 += other.m2 + delta.cwiseProduct(delta) * (na * nb / n);
  acc.count += other.count;
}

inline constexpr std::int64_t kPathsPerBlock = 64;

/// Runs path_fn(path, values) for every path, where `values` is a
/// (n_series × n_records) matrix the callback fills. Paths are grouped in
/// fixed blocks; each block accumulates in path order and blocks merge in
/// block order, so results are bit-identical for any worker count.
template <class PathFn>
Moments run_ensemble(std::int64_t n_paths, int n_series,
                     std::int64_t n_records, int workers, PathFn&& path_fn) {
  const std::int64_t n_blocks = (n_paths + kPathsPerBlock - 1) / kPathsPerBlock;
  std::vector<Moments> blocks(static_cast<std::size_t>(n_blocks));
  parallel_for(n_blocks, workers, [&](std::int64_t blk) {
    Moments m;
    m.mean = Mat::Zero(n_series, n_records);
    m.m2 = Mat::Zero(n_series, n_records);
    Mat values(n_series, n_records);
    const std::int64_t begin = blk * kPathsPerBlock;
    const std::int64_t end = std::min(n_paths, begin + kPathsPerBlock);
    for (std::int64_t p = begin; p < end; ++p) {
      values.setZero();
      path_fn(p, values);
      ++m.count;
      const Mat delta = values - m.mean;
      m.mean += delta / static_cast<double>(m.count);
      m.m2 += delta.cwiseProduct(values - m.mean);
    }
    blocks[static_cast<std::size_t>(blk)] = std::move(m);
  });
  Moments total;
  for (const auto& b : blocks) merge_into(total, b);
  return total;
}

inline EnsemblePairStats to_stats(const Moments& m, int series,
                                  const SimConfig& cfg, bool weighted) {
  EnsemblePairStats s;
  s.times = cfg.record_times();
  s.weighted_by_metric = weighted;
  s.n_paths = m.count;
  const auto n_rec = static_cast<std::size_t>(m.mean.cols());
  s.mean_sq_dist.resize(n_rec);
  s.std_err.resize(n_rec);
  const double n = static_cast<double>(m.count);
  for (std::size_t k = 0; k < n_rec; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    s.mean_sq_dist[k] = m.mean(series, kk);
    const double var = m.count > 1 ? m.m2(series, kk) / (n - 1.0) : 0.0;
    s.std_err[k] = std::sqrt(std::max(var, 0.0) / n);
  }
  return s;
}

}  // namespace detail

inline Trajectory simulate_trajectory(const SdeSystem& sys, const Vec& x0,
                                      const SimConfig& cfg,
                                      std::int64_t path_index,
                                      std::uint32_t stream_id = rng::kTrajectoryA,
                                      bool noisy = true) {
  cfg.validate();
  Trajectory out;
  detail::integrate(sys, x0, cfg, path_index, stream_id, noisy,
                    [&](std::int64_t, const Vec& x, double t) {
                      out.times.push_back(t);
                      out.states.push_back(x);
                    });
  return out;
}

/// Two trajectories with the same drift/diffusion and independent increment
/// streams keyed by (master_seed, path_index, trajectory id).
inline TrajectoryPair simulate_pair(const SdeSystem& sys, const Vec& a0,
                                    const Vec& b0, const SimConfig& cfg,
                                    std::int64_t path_index,
                                    PairStreams streams = {},
                                    PairMode mode = PairMode::kPairNoisy) {
  cfg.validate();
  TrajectoryPair out;
  detail::integrate_pair(
      sys, a0, b0, cfg, path_index, mode, streams,
      [&](std::int64_t, const Vec& a, const Vec& b, double t) {
        out.a.times.push_back(t);
        out.a.states.push_back(a);
        out.b.times.push_back(t);
        out.b.states.push_back(b);
      });
  return out;
}

/// Trajectory a follows the noise-free drift; b is noisy.
inline TrajectoryPair simulate_pair_noisefree_vs_noisy(
    const SdeSystem& sys, const Vec& a0, const Vec& b0, const SimConfig& cfg,
    std::int64_t path_index) {
  return simulate_pair(sys, a0, b0, cfg, path_index, {},
                       PairMode::kNoiseFreeVsNoisy);
}

using InitPair = std::pair<Vec, Vec>;
using InitSampler =
    std::function<InitPair(std::int64_t path_index, rng::GaussianStream& rng)>;
using InitState =
    std::function<Vec(std::int64_t path_index, rng::GaussianStream& rng)>;

inline InitSampler fixed_initial(Vec a0, Vec b0) {
  return [a0 = std::move(a0), b0 = std::move(b0)](std::int64_t,
                                                   rng::GaussianStream&) {
    return InitPair{a0, b0};
  };
}

/// a0 fixed, b0 = center + spread·N(0, I) drawn from the path's init stream.
inline InitSampler gaussian_initial(Vec a0, Vec b_center, double spread) {
  return [a0 = std::move(a0), bc = std::move(b_center), spread](
             std::int64_t, rng::GaussianStream& rng) {
    Vec b = bc;
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) += spread * rng.next_normal();
    return InitPair{a0, b};
  };
}

/// Per-time mean of ‖a−b‖² (or (a−b)ᵀM(t)(a−b) when `metric` is given) with
/// standard errors.
inline EnsemblePairStats ensemble_pair_stats(
    const SdeSystem& sys, const InitSampler& init_sampler,
    const SimConfig& cfg, const std::optional<Metric>& metric = std::nullopt,
    PairMode mode = PairMode::kPairNoisy) {
  cfg.validate();
  require(cfg.n_paths >= 2, ErrorKind::kInvalidArgument,
          "ensemble needs at least two paths");
  if (metric)
    require(metric->n() == sys.n(), ErrorKind::kDimensionMismatch,
            "metric dimension");
  auto moments = detail::run_ensemble(
      cfg.n_paths, 1, cfg.n_records(), cfg.workers,
      [&](std::int64_t p, Mat& values) {
        rng::GaussianStream init_rng(cfg.master_seed,
                                     static_cast<std::uint64_t>(p),
                                     rng::kInitStream);
        const auto [a0, b0] = init_sampler(p, init_rng);
        Vec diff(sys.n());
        detail::integrate_pair(
            sys, a0, b0, cfg, p, mode, PairStreams{},
            [&](std::int64_t k, const Vec& a, const Vec& b, double t) {
              diff = a - b;
              values(0, k) = metric ? metric->weighted_sq_norm(diff, t)
                                    : diff.squaredNorm();
            });
      });
  return detail::to_stats(moments, 0, cfg, metric.has_value());
}

using Observable = std::function<double(const Vec& x, double t)>;

/// Single noisy trajectories per path; one stats series per observable.
inline std::vector<EnsemblePairStats> ensemble_observable_stats(
    const SdeSystem& sys, const InitState& init, const SimConfig& cfg,
    const std::vector<Observable>& observables) {
  cfg.validate();
  require(cfg.n_paths >= 2, ErrorKind::kInvalidArgument,
          "ensemble needs at least two paths");
  require(!observables.empty(), ErrorKind::kInvalidArgument,
          "no observables given");
  const int n_series = static_cast<int>(observables.size());
  auto moments = detail::run_ensemble(
      cfg.n_paths, n_series, cfg.n_records(), cfg.workers,
      [&](std::int64_t p, Mat& values) {
        rng::GaussianStream init_rng(cfg.master_seed,
                                     static_cast<std::uint64_t>(p),
                                     rng::kInitStream);
        const Vec x0 = init(p, init_rng);
        detail::integrate(sys, x0, cfg, p, rng::kTrajectoryA, true,
                          [&](std::int64_t k, const Vec& x, double t) {
                            for (int s = 0; s < n_series; ++s)
                              values(s, k) = observables[static_cast<std::size_t>(s)](x, t);
                          });
      });
  std::vector<EnsemblePairStats> out;
  out.reserve(observables.size());
  for (int s = 0; s < n_series; ++s)
    out.push_back(detail::to_stats(moments, s, cfg, false));
  return out;
}

}  // namespace stocon::sim
