#pragma once

// Certificate estimation, generator evaluation, mean-square bound envelopes,
// tail bounds and Monte-Carlo verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "stocon/core.hpp"
#include "stocon/matalg.hpp"
#include "stocon/parallel.hpp"
#include "stocon/sim.hpp"

namespace stocon::analysis {

inline constexpr double kMaxThetaCondition = 1e12;

struct RateEstimate {
  /// −max over samples of λ_max(sym((Θ̇ + Θ·∂f/∂x)Θ⁻¹)).
  double lambda = 0.0;
  bool contracting = false;
  Vec witness_state;
  double witness_time = 0.0;
  double max_theta_condition = 1.0;
  std::int64_t n_points = 0;
};

struct NoiseBoundEstimate {
  double c = 0.0;
  Vec witness_state;
  double witness_time = 0.0;
  std::int64_t n_points = 0;
};

/// Samples: the domain's Halton points followed by `extra` (e.g. states
/// harvested from simulated trajectories).
inline std::vector<DomainPoint> sample_points(const DomainBox& dom,
                                              std::span<const DomainPoint> extra) {
  std::vector<DomainPoint> pts;
  pts.reserve(static_cast<std::size_t>(dom.sample_count()) + extra.size());
  for (std::int64_t i = 0; i < dom.sample_count(); ++i)
    pts.push_back(dom.sample(i));
  pts.insert(pts.end(), extra.begin(), extra.end());
  return pts;
}

namespace detail {

// argmax with ties broken by the lowest index.
inline std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

/// Generalized Jacobian F = (Θ̇ + Θ·J)Θ⁻¹ at one (x, t).
inline Mat generalized_jacobian(const SdeSystem& sys, const Metric& metric,
                                const Vec& x, double t) {
  const Mat theta = metric.theta(t);
  const Mat jac = sys.drift_jacobian(x, t);
  const Mat lhs = metric.theta_dot(t) + theta * jac;
  // F = lhs·Θ⁻¹  ⇔  Θᵀ Fᵀ = lhsᵀ.
  Eigen::PartialPivLU<Mat> lu(theta.transpose());
  return lu.solve(lhs.transpose()).transpose();
}

inline RateEstimate estimate_rate(const SdeSystem& sys, const Metric& metric,
                                  const DomainBox& dom,
                                  std::span<const DomainPoint> extra = {},
                                  int workers = 1) {
  require(sys.n() == metric.n() && sys.n() == dom.n(),
          ErrorKind::kDimensionMismatch, "estimate_rate dimensions");
  const auto pts = sample_points(dom, extra);
  std::vector<double> values(pts.size());
  std::vector<double> conds(pts.size(), 1.0);

  // Constant metrics share one Θ⁻¹ and one condition number.
  std::optional<Mat> theta_inv;
  double const_cond = 1.0;
  if (metric.is_constant()) {
    const Mat& th = metric.constant_theta();
    const_cond = matalg::condition_number(th);
    if (!(const_cond <= kMaxThetaCondition))
      throw Error(ErrorKind::kSingularTheta,
                  "theta condition number " + std::to_string(const_cond));
    theta_inv = Eigen::PartialPivLU<Mat>(th).inverse();
  }

  parallel_for(static_cast<std::int64_t>(pts.size()), workers,
               [&](std::int64_t i) {
                 const auto& p = pts[static_cast<std::size_t>(i)];
                 Mat f;
                 if (theta_inv) {
                   f = metric.constant_theta() * sys.drift_jacobian(p.x, p.t) *
                       *theta_inv;
                 } else {
                   const Mat th = metric.theta(p.t);
                   const double cond = matalg::condition_number(th);
                   conds[static_cast<std::size_t>(i)] = cond;
                   if (!(cond <= kMaxThetaCondition))
                     throw Error(ErrorKind::kSingularTheta,
                                 "theta condition number " +
                                     std::to_string(cond) + " at t=" +
                                     std::to_string(p.t));
                   f = generalized_jacobian(sys, metric, p.x, p.t);
                 }
                 values[static_cast<std::size_t>(i)] = matalg::lambda_max_sym(f);
               });

  const std::size_t best = detail::argmax(values);
  RateEstimate out;
  out.lambda = -values[best];
  out.contracting = out.lambda > 0.0;
  out.witness_state = pts[best].x;
  out.witness_time = pts[best].t;
  out.max_theta_condition =
      theta_inv ? const_cond : *std::max_element(conds.begin(), conds.end());
  out.n_points = static_cast<std::int64_t>(pts.size());
  return out;
}

/// C = max over samples of tr(σᵀM(t)σ).
inline NoiseBoundEstimate estimate_noise_bound(
    const SdeSystem& sys, const Metric& metric, const DomainBox& dom,
    std::span<const DomainPoint> extra = {}, int workers = 1) {
  require(sys.n() == metric.n() && sys.n() == dom.n(),
          ErrorKind::kDimensionMismatch, "estimate_noise_bound dimensions");
  const auto pts = sample_points(dom, extra);
  std::vector<double> values(pts.size());
  parallel_for(static_cast<std::int64_t>(pts.size()), workers,
               [&](std::int64_t i) {
                 const auto& p = pts[static_cast<std::size_t>(i)];
                 const Mat sig = sys.diffusion(p.x, p.t);
                 // tr(σᵀ ΘᵀΘ σ) = ‖Θσ‖_F².
                 values[static_cast<std::size_t>(i)] =
                     (metric.theta(p.t) * sig).squaredNorm();
               });
  const std::size_t best = detail::argmax(values);
  NoiseBoundEstimate out;
  out.c = values[best];
  out.witness_state = pts[best].x;
  out.witness_time = pts[best].t;
  out.n_points = static_cast<std::int64_t>(pts.size());
  return out;
}

struct CertificateEstimate {
  RateEstimate rate;
  NoiseBoundEstimate noise;
  /// Present only when the sampled rate is positive.
  std::optional<ContractionCertificate> certificate;
};

/// Estimated certificate over `dom`. Sampled suprema only; no soundness
/// guarantee between samples.
inline CertificateEstimate estimate_certificate(
    const SdeSystem& sys, const Metric& metric, const DomainBox& dom,
    std::span<const DomainPoint> extra = {}, int workers = 1) {
  CertificateEstimate out;
  out.rate = estimate_rate(sys, metric, dom, extra, workers);
  out.noise = estimate_noise_bound(sys, metric, dom, extra, workers);
  if (out.rate.contracting) {
    out.certificate.emplace(out.rate.lambda, out.noise.c, metric, dom,
                            Provenance::kEstimated);
  }
  return out;
}

/// 𝓛V₁ for V₁ = (a−b)ᵀM(t)(a−b) on the independent-noise pair:
/// (a−b)ᵀṀ(a−b) + 2(a−b)ᵀM(f(a)−f(b)) + tr(σ(a)ᵀMσ(a)) + tr(σ(b)ᵀMσ(b)).
inline double generator_value(const SdeSystem& sys, const Metric& metric,
                              const Vec& a, const Vec& b, double t) {
  require(a.size() == sys.n() && b.size() == sys.n() && metric.n() == sys.n(),
          ErrorKind::kDimensionMismatch, "generator_value dimensions");
  const Vec diff = a - b;
  const Mat m = metric.matrix(t);
  const Mat th = metric.theta(t);
  const Vec df = sys.drift(a, t) - sys.drift(b, t);
  double v = 2.0 * diff.dot(m * df);
  if (!metric.is_constant()) v += diff.dot(metric.matrix_dot(t) * diff);
  v += (th * sys.diffusion(a, t)).squaredNorm();
  v += (th * sys.diffusion(b, t)).squaredNorm();
  return v;
}

enum class EnvelopeForm {
  kExpectation,  // C/λ + E₀·e^{−2λt}
  kSharp         // C/λ + [E₀ − C/λ]⁺·e^{−2λt}
};

/// t ↦ (c_over_lambda + initial_excess·e^{−decay_rate·t}) / beta_divisor.
struct BoundEnvelope {
  double c_over_lambda = 0.0;
  double decay_rate = 1.0;
  double initial_excess = 0.0;
  double beta_divisor = 1.0;

  double operator()(double t) const {
    return (c_over_lambda + initial_excess * std::exp(-decay_rate * t)) /
           beta_divisor;
  }
  double asymptote() const { return c_over_lambda / beta_divisor; }

  static BoundEnvelope constant(double level) { return {level, 1.0, 0.0, 1.0}; }
};

/// Noise level of the envelope: C/λ for two noisy trajectories, C/(2λ) when
/// one of them is noise-free.
inline double noise_level(const ContractionCertificate& cert,
                          sim::PairMode mode) {
  const double level = cert.bound_c() / cert.rate_lambda();
  return mode == sim::PairMode::kNoiseFreeVsNoisy ? 0.5 * level : level;
}

/// Mean-square envelope from a certificate. `e0` is the (metric-weighted when
/// the metric is not the identity) expected initial squared distance. The
/// result bounds E‖a−b‖² (divided by β), or E[(a−b)ᵀM(a−b)] when
/// `metric_weighted` is set.
inline BoundEnvelope ms_bound(const ContractionCertificate& cert, double e0,
                              sim::PairMode mode,
                              EnvelopeForm form = EnvelopeForm::kExpectation,
                              bool metric_weighted = false) {
  require(e0 >= 0.0, ErrorKind::kInvalidArgument, "e0 must be >= 0");
  BoundEnvelope env;
  env.c_over_lambda = noise_level(cert, mode);
  env.decay_rate = 2.0 * cert.rate_lambda();
  env.initial_excess = form == EnvelopeForm::kSharp
                           ? std::max(0.0, e0 - env.c_over_lambda)
                           : e0;
  env.beta_divisor = metric_weighted ? 1.0 : cert.metric().beta();
  return env;
}

/// Sharp envelope for a distribution of initial conditions: the clipped
/// excess is averaged over sampled initial V₁ values.
inline BoundEnvelope ms_bound_over_initial(const ContractionCertificate& cert,
                                           std::span<const double> initial_v,
                                           sim::PairMode mode,
                                           bool metric_weighted = false) {
  require(!initial_v.empty(), ErrorKind::kInvalidArgument,
          "need at least one initial sample");
  BoundEnvelope env;
  env.c_over_lambda = noise_level(cert, mode);
  env.decay_rate = 2.0 * cert.rate_lambda();
  double sum = 0.0;
  for (double v : initial_v) sum += std::max(0.0, v - env.c_over_lambda);
  env.initial_excess = sum / static_cast<double>(initial_v.size());
  env.beta_divisor = metric_weighted ? 1.0 : cert.metric().beta();
  return env;
}

/// T_ε = (1/2λ)·log √(e0/ε); zero when e0 ≤ ε.
inline double t_epsilon(const ContractionCertificate& cert, double e0,
                        double eps) {
  require(eps > 0.0 && e0 >= 0.0, ErrorKind::kInvalidArgument,
          "t_epsilon needs eps > 0 and e0 >= 0");
  if (e0 <= eps) return 0.0;
  return std::log(std::sqrt(e0 / eps)) / (2.0 * cert.rate_lambda());
}

struct TailBound {
  double t_epsilon = 0.0;
  double level_a = 0.0;
  double probability = 1.0;
};

/// P(‖a(t)−b(t)‖ ≥ A) ≤ √(C/λ + ε)/A for t ≥ T_ε (clipped to 1).
inline TailBound markov_tail(const ContractionCertificate& cert, double eps,
                             double level_a, double e0 = 0.0) {
  require(level_a > 0.0, ErrorKind::kInvalidArgument, "level A must be > 0");
  TailBound out;
  out.t_epsilon = t_epsilon(cert, e0, eps);
  out.level_a = level_a;
  const double mean_bound =
      std::sqrt(cert.bound_c() / cert.rate_lambda() + eps);
  out.probability = std::min(1.0, mean_bound / level_a);
  return out;
}

/// The tail bound only holds from T_ε on; earlier times get no answer.
inline std::optional<double> tail_probability_at(const TailBound& tail,
                                                 double t) {
  if (t < tail.t_epsilon) return std::nullopt;
  return tail.probability;
}

/// Finite-time supermartingale bound min(1, v0·e^{−λ·t_start}/A), valid for
/// processes with 𝓛V ≤ −λV (no additive noise term).
inline double finite_time_supermartingale_tail(double v0, double lambda,
                                               double t_start, double level_a) {
  require(v0 >= 0.0 && lambda > 0.0 && level_a > 0.0,
          ErrorKind::kInvalidArgument, "supermartingale tail arguments");
  return std::min(1.0, v0 * std::exp(-lambda * t_start) / level_a);
}

/// C/λ + [g0 − C/λ]⁺·e^{−λt}. Note the rate is λ, not 2λ.
inline double gronwall_envelope(double g0, double lambda, double c, double t) {
  require(lambda > 0.0, ErrorKind::kInvalidArgument, "lambda must be > 0");
  const double level = c / lambda;
  return level + std::max(0.0, g0 - level) * std::exp(-lambda * t);
}

/// E(a(t)−b(t))² for two independent-noise OU trajectories.
inline double ou_exact_msd(double a0, double b0, double lambda, double sigma,
                           double t) {
  require(lambda > 0.0, ErrorKind::kInvalidArgument, "lambda must be > 0");
  const double decay = std::exp(-2.0 * lambda * t);
  const double d = a0 - b0;
  return d * d * decay + sigma * sigma / lambda * (1.0 - decay);
}

struct VerificationReport {
  bool pass = true;
  /// min over checked t of envelope(t) + k·SE(t) − msd(t).
  double worst_margin = std::numeric_limits<double>::infinity();
  double worst_time = 0.0;
  double k_sigma = 3.0;
  std::int64_t n_points = 0;
};

inline constexpr double kDefaultKSigma = 3.0;

/// Passes iff msd(t) ≤ envelope(t) + k·SE(t) at every recorded t ≥ t_from.
inline VerificationReport verify_envelope(const sim::EnsemblePairStats& stats,
                                          const BoundEnvelope& env,
                                          double k_sigma = kDefaultKSigma,
                                          double t_from = 0.0) {
  require(k_sigma > 0.0, ErrorKind::kInvalidArgument, "k_sigma must be > 0");
  VerificationReport r;
  r.k_sigma = k_sigma;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const double t = stats.times[i];
    if (t < t_from) continue;
    ++r.n_points;
    const double margin = env(t) + k_sigma * stats.std_err[i] -
                          stats.mean_sq_dist[i];
    if (margin < r.worst_margin) {
      r.worst_margin = margin;
      r.worst_time = t;
    }
  }
  r.pass = r.n_points > 0 && r.worst_margin >= 0.0;
  return r;
}

}  // namespace stocon::analysis
