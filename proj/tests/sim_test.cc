#include "stocon/sim.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "stocon/analysis.hpp"
#include "stocon/models.hpp"

namespace stocon::sim {
namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

SdeSystem scalar(double drift_gain, double sigma) {
  return SdeSystem(
      1, 1, [drift_gain](const Vec& x, double, Vec& o) { o(0) = drift_gain * x(0); },
      [sigma](const Vec&, double, Mat& o) { o(0, 0) = sigma; },
      [drift_gain](const Vec&, double, Mat& o) { o(0, 0) = drift_gain; });
}

// Exact second moment of the Euler–Maruyama recursion for an OU pair:
// d ← (1−λh)d + σ√h(ξ₁−ξ₂), so E d_n² = q^{2n} d₀² + 2σ²h Σ_{k<n} q^{2k}.
double em_ou_pair_msd(double d0, double lambda, double sigma, double h, long n,
                      bool both_noisy = true) {
  const double q2 = (1 - lambda * h) * (1 - lambda * h);
  const double qn = std::pow(q2, static_cast<double>(n));
  const double noise = (both_noisy ? 2.0 : 1.0) * sigma * sigma * h;
  return qn * d0 * d0 + noise * (1 - qn) / (1 - q2);
}

TEST(EmStep, Examples) {
  const Vec dw = v1(0.0);
  EXPECT_EQ(em_step(scalar(0, 0), v1(1.7), 0, 0.1, dw)(0), 1.7);
  EXPECT_NEAR(em_step(scalar(-1, 0), v1(1.0), 0, 0.1, dw)(0), 0.9, 1e-15);
  EXPECT_NEAR(em_step(scalar(0, 1), v1(2.0), 0, 0.1, v1(0.05))(0), 2.05, 1e-15);
}

TEST(EmStep, NonFiniteThrows) {
  const SdeSystem blow(
      1, 1, [](const Vec&, double, Vec& o) { o(0) = INFINITY; },
      [](const Vec&, double, Mat& o) { o(0, 0) = 0; },
      [](const Vec&, double, Mat& o) { o(0, 0) = 0; });
  EXPECT_THROW(em_step(blow, v1(0), 0, 0.1, v1(0)), NonFiniteError);
}

TEST(EmStep, DimensionMismatch) {
  EXPECT_THROW(em_step(scalar(-1, 1), Vec::Zero(2), 0, 0.1, v1(0)), Error);
}

TEST(SimConfig, Validation) {
  SimConfig c;
  c.dt = 0;
  EXPECT_THROW(c.validate(), Error);
  c.dt = 2;
  c.t_max = 1;
  EXPECT_THROW(c.validate(), Error);
  c = SimConfig{};
  c.record_stride = 0;
  EXPECT_THROW(c.validate(), Error);
  c = SimConfig{};
  c.dt = 1e-3;
  c.t_max = 5;
  c.record_stride = 100;
  EXPECT_EQ(c.n_steps(), 5000);
  EXPECT_EQ(c.n_records(), 51);
  EXPECT_DOUBLE_EQ(c.record_times().back(), 5.0);
}

TEST(SimulatePair, IdenticalDeterministicPathsStayTogether) {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 3;
  const auto pair = simulate_pair(scalar(-1, 0), v1(1.5), v1(1.5), cfg, 0);
  ASSERT_EQ(pair.a.states.size(), 301u);
  for (std::size_t i = 0; i < pair.a.states.size(); ++i)
    EXPECT_EQ(pair.a.states[i](0), pair.b.states[i](0));
}

TEST(SimulatePair, SharedStreamCancelsAdditiveNoise) {
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 1;
  cfg.master_seed = 5;
  const double lambda = 2.0;
  const auto pair = simulate_pair(scalar(-lambda, 1.0), v1(2.0), v1(0.0), cfg, 3,
                                  PairStreams{1, 1});
  for (std::size_t i = 0; i < pair.a.states.size(); i += 100) {
    const double expect = 2.0 * std::pow(1 - lambda * cfg.dt, static_cast<double>(i));
    EXPECT_NEAR(pair.a.states[i](0) - pair.b.states[i](0), expect, 1e-12);
  }
}

TEST(SimulatePair, IndependentStreamsDiffer) {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 1;
  const auto pair = simulate_pair(scalar(-1, 1), v1(0), v1(0), cfg, 0);
  EXPECT_NE(pair.a.states.back()(0), pair.b.states.back()(0));
}

TEST(SimulatePair, NoiseFreeMemberIsDeterministic) {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 1;
  const auto pair = simulate_pair_noisefree_vs_noisy(scalar(-1, 1), v1(1), v1(1), cfg, 4);
  EXPECT_NEAR(pair.a.states.back()(0), std::pow(0.99, 100), 1e-14);
  EXPECT_NE(pair.b.states.back()(0), pair.a.states.back()(0));
  // σ ≡ 0 everywhere: identical to the deterministic pair.
  const auto quiet = simulate_pair_noisefree_vs_noisy(scalar(-1, 0), v1(1), v1(1), cfg, 4);
  EXPECT_EQ(quiet.a.states.back()(0), quiet.b.states.back()(0));
}

TEST(Ensemble, DeterministicIdenticalStartGivesZeros) {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 1;
  cfg.n_paths = 10;
  const auto s = ensemble_pair_stats(scalar(-1, 0), fixed_initial(v1(1), v1(1)), cfg);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s.mean_sq_dist[i], 0.0);
    EXPECT_EQ(s.std_err[i], 0.0);
  }
  EXPECT_EQ(s.n_paths, 10);
}

TEST(Ensemble, NeedsTwoPaths) {
  SimConfig cfg;
  cfg.n_paths = 1;
  EXPECT_THROW(ensemble_pair_stats(scalar(-1, 1), fixed_initial(v1(0), v1(0)), cfg),
               Error);
}

TEST(Ensemble, OuPairAtHalfLogTwo) {
  // E(a−b)² = 2.5 at t = ln(2)/2 for λ=σ=1, a0−b0=2.
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 0.347;
  cfg.record_stride = 347;
  cfg.n_paths = 100000;
  cfg.master_seed = 2024;
  const auto s = ensemble_pair_stats(models::build_ou(1, 1), fixed_initial(v1(2), v1(0)), cfg);
  ASSERT_EQ(s.size(), 2u);
  const double t = s.times[1];
  EXPECT_NEAR(analysis::ou_exact_msd(2, 0, 1, 1, std::log(2.0) / 2), 2.5, 1e-12);
  EXPECT_NEAR(s.mean_sq_dist[1], analysis::ou_exact_msd(2, 0, 1, 1, t), 3 * s.std_err[1]);
  EXPECT_NEAR(s.mean_sq_dist[1], 2.5, 3 * s.std_err[1] + 2e-3);
}

TEST(Ensemble, OuPairMatchesDiscreteOracleEverywhere) {
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 2;
  cfg.record_stride = 50;
  cfg.n_paths = 10000;
  cfg.master_seed = 99;
  const auto s = ensemble_pair_stats(models::build_ou(1, 1), fixed_initial(v1(2), v1(0)), cfg);
  // 41 correlated checks at once, so the band is 4·SE rather than 3.
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double exact = em_ou_pair_msd(2, 1, 1, cfg.dt, static_cast<long>(i) * 50);
    EXPECT_LE(std::abs(s.mean_sq_dist[i] - exact), 4 * s.std_err[i] + 1e-12)
        << "t=" << s.times[i];
  }
}

TEST(Ensemble, BrownianPairVarianceGrowsLinearly) {
  const double s_ = 0.7;
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 2;
  cfg.record_stride = 20;
  cfg.n_paths = 20000;
  cfg.master_seed = 8;
  const auto s = ensemble_pair_stats(scalar(0, s_), fixed_initial(v1(1), v1(0)), cfg);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double exact = 1 + 2 * s_ * s_ * s.times[i];
    EXPECT_LE(std::abs(s.mean_sq_dist[i] - exact), 3 * s.std_err[i] + 1e-12);
  }
}

TEST(Ensemble, NoiseFreeVsNoisyOuSettlesAtHalfLevel) {
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 4;
  cfg.record_stride = 4000;
  cfg.n_paths = 20000;
  cfg.master_seed = 17;
  const double lambda = 1.5, sigma = 1.2;
  const auto s = ensemble_pair_stats(models::build_ou(lambda, sigma),
                                     fixed_initial(v1(1), v1(1)), cfg, std::nullopt,
                                     PairMode::kNoiseFreeVsNoisy);
  const double exact = em_ou_pair_msd(0, lambda, sigma, cfg.dt, 4000, false);
  EXPECT_NEAR(exact, sigma * sigma / (2 * lambda), 2e-3);
  EXPECT_LE(std::abs(s.mean_sq_dist.back() - exact), 3 * s.std_err.back());
}

TEST(Ensemble, MetricWeightedUsesThetaNorm) {
  Mat m(2, 2);
  m << 2, 0, 0, 8;
  const Metric metric = make_constant_metric(m);
  const SdeSystem quiet(
      2, 1, [](const Vec& x, double, Vec& o) { o = -x; },
      [](const Vec&, double, Mat& o) { o.setZero(); },
      [](const Vec&, double, Mat& o) { o = -Mat::Identity(2, 2); });
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.t_max = 0.1;
  cfg.n_paths = 2;
  Vec a(2), b(2);
  a << 1, 1;
  b << 0, 0;
  const auto s = ensemble_pair_stats(quiet, fixed_initial(a, b), cfg, metric);
  EXPECT_TRUE(s.weighted_by_metric);
  EXPECT_NEAR(s.mean_sq_dist[0], 10.0, 1e-12);
  EXPECT_NEAR(s.mean_sq_dist[1], 10.0 * 0.81, 1e-12);
}

TEST(Ensemble, BitIdenticalAcrossWorkerCounts) {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 1;
  cfg.record_stride = 10;
  cfg.n_paths = 1000;  // not a multiple of the block size
  cfg.master_seed = 31;
  const auto sys = models::build_ou(0.8, 1.3);
  const auto init = gaussian_initial(v1(0), v1(1), 0.5);
  cfg.workers = 1;
  const auto ref = ensemble_pair_stats(sys, init, cfg);
  for (int w : {2, 3, 8}) {
    cfg.workers = w;
    const auto s = ensemble_pair_stats(sys, init, cfg);
    EXPECT_EQ(s.mean_sq_dist, ref.mean_sq_dist) << w << " workers";
    EXPECT_EQ(s.std_err, ref.std_err) << w << " workers";
  }
}

TEST(Ensemble, ObservableStatsBitIdenticalAcrossWorkerCounts) {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 1;
  cfg.record_stride = 5;
  cfg.n_paths = 300;
  cfg.master_seed = 4;
  const auto sys = models::build_ou(1, 1);
  const InitState init = [](std::int64_t p, rng::GaussianStream&) {
    return v1(static_cast<double>(p % 7));
  };
  const std::vector<Observable> obs = {
      [](const Vec& x, double) { return x(0); },
      [](const Vec& x, double t) { return x(0) * x(0) + t; }};
  cfg.workers = 1;
  const auto ref = ensemble_observable_stats(sys, init, cfg, obs);
  cfg.workers = 4;
  const auto s = ensemble_observable_stats(sys, init, cfg, obs);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].mean_sq_dist, ref[0].mean_sq_dist);
  EXPECT_EQ(s[1].std_err, ref[1].std_err);
}

TEST(Ensemble, BlowUpReportsOffendingPath) {
  // Only path 37 starts off the origin, and ẋ = x² explodes before t = 2.
  const SdeSystem sys(
      1, 1, [](const Vec& x, double, Vec& o) { o(0) = x(0) * x(0); },
      [](const Vec&, double, Mat& o) { o(0, 0) = 0; },
      [](const Vec& x, double, Mat& o) { o(0, 0) = 2 * x(0); });
  const InitSampler init = [](std::int64_t p, rng::GaussianStream&) {
    return InitPair{v1(0), v1(p == 37 ? 1.0 : 0.0)};
  };
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 3;
  cfg.n_paths = 200;
  for (int w : {1, 4}) {
    cfg.workers = w;
    try {
      ensemble_pair_stats(sys, init, cfg);
      FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
      EXPECT_EQ(e.path_index(), 37);
      EXPECT_GT(e.time(), 0.5);
    }
  }
}

TEST(Ensemble, HalvingDtMovesTerminalMsdLessThanStandardError) {
  // Coarse and fine Euler–Maruyama driven by the same Brownian path: each
  // coarse increment is the sum of two fine ones.
  const auto sys = models::build_ou(1, 1);
  const double t_max = 2, h = 1e-2;
  const long coarse_steps = static_cast<long>(t_max / h);
  const int n_paths = 10000;
  double sum_c = 0, sum_f = 0, sumsq_f = 0;
  Vec w1(1), w2(1);
  for (int p = 0; p < n_paths; ++p) {
    rng::GaussianStream sa(11, static_cast<std::uint64_t>(p), rng::kTrajectoryA);
    rng::GaussianStream sb(11, static_cast<std::uint64_t>(p), rng::kTrajectoryB);
    Vec ac = v1(2), bc = v1(0), af = v1(2), bf = v1(0);
    const double sq = std::sqrt(h / 2);
    for (long k = 0; k < coarse_steps; ++k) {
      const double t = static_cast<double>(k) * h;
      w1(0) = sq * sa.next_normal();
      w2(0) = sq * sa.next_normal();
      af = em_step(sys, em_step(sys, af, t, h / 2, w1), t + h / 2, h / 2, w2);
      ac = em_step(sys, ac, t, h, w1 + w2);
      w1(0) = sq * sb.next_normal();
      w2(0) = sq * sb.next_normal();
      bf = em_step(sys, em_step(sys, bf, t, h / 2, w1), t + h / 2, h / 2, w2);
      bc = em_step(sys, bc, t, h, w1 + w2);
    }
    const double dc = (ac - bc).squaredNorm();
    const double df = (af - bf).squaredNorm();
    sum_c += dc;
    sum_f += df;
    sumsq_f += df * df;
  }
  const double mc = sum_c / n_paths, mf = sum_f / n_paths;
  const double se = std::sqrt((sumsq_f / n_paths - mf * mf) / (n_paths - 1));
  EXPECT_LT(std::abs(mf - mc), se);
}

}  // namespace
}  // namespace stocon::sim
