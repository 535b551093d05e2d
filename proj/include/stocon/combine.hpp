#pragma once

// Certificate algebra: parallel superposition, negative feedback,
// hierarchical and small-gain interconnections of two certified subsystems.
//
// Structural hypotheses on the couplings (feedback shape, hierarchy bound,
// coupling suprema) are caller assertions. The check_* helpers spot-check
// them on concrete Jacobians when those are available.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "stocon/core.hpp"
#include "stocon/matalg.hpp"

namespace stocon::combine {

struct SuperpositionWeights {
  double l1 = 1.0;
  double m1 = 1.0;
  double l2 = 1.0;
  double m2 = 1.0;

  void validate() const {
    require(l1 > 0.0 && l2 > 0.0 && l1 <= m1 && l2 <= m2,
            ErrorKind::kInvalidArgument,
            "superposition weights need 0 < l_i <= m_i");
  }
};

struct CouplingSpec {
  std::optional<double> j12_sup_sing;
  std::optional<double> j21_sup_sing;
  std::optional<double> feedback_k;
  std::optional<double> hierarchy_bound_k;
};

struct KSearchRange {
  double k_min = 1e-8;
  double k_max = 1e8;
};

struct SmallGainResult {
  bool applicable = false;
  /// Achieved min over k of the sing²(B_k) upper estimate.
  double inf_sing_sq = 0.0;
  double k_opt = 1.0;
  std::optional<ContractionCertificate> certificate;
};

inline constexpr double kMetricMatchTolerance = 1e-10;

namespace detail {

inline std::shared_ptr<const ProvenanceNode> node(
    std::string rule, double lambda, double c,
    std::vector<std::pair<std::string, double>> params,
    const ContractionCertificate& c1, const ContractionCertificate& c2,
    std::string note = {}) {
  auto out = std::make_shared<ProvenanceNode>();
  out->kind = Provenance::kCombined;
  out->rule = std::move(rule);
  out->lambda = lambda;
  out->c = c;
  out->params = std::move(params);
  out->inputs = {c1.provenance_tree(), c2.provenance_tree()};
  out->note = std::move(note);
  return out;
}

inline void require_constant(const ContractionCertificate& c) {
  require(c.metric().is_constant(), ErrorKind::kNonConstantMetric,
          "combination rules need constant metrics");
}

inline DomainBox concat_domains(const DomainBox& d1, const DomainBox& d2) {
  Vec lo(d1.n() + d2.n());
  Vec hi(d1.n() + d2.n());
  lo << d1.lower(), d2.lower();
  hi << d1.upper(), d2.upper();
  return DomainBox(lo, hi, std::min(d1.t_max(), d2.t_max()),
                   std::max(d1.sample_count(), d2.sample_count()));
}

}  // namespace detail

/// Superposition α₁(t)x₁ + α₂(t)x₂ of two systems in the same constant metric:
/// rate l₁λ₁ + l₂λ₂, bound m₁C₁ + m₂C₂. The result lives on the superposed
/// output, which has the components' dimension.
inline ContractionCertificate combine_parallel(const ContractionCertificate& c1,
                                               const ContractionCertificate& c2,
                                               const SuperpositionWeights& w) {
  w.validate();
  detail::require_constant(c1);
  detail::require_constant(c2);
  require(c1.n() == c2.n(), ErrorKind::kMetricMismatch,
          "parallel combination needs equal dimensions");
  const Mat& m1 = c1.metric().constant_matrix();
  const Mat& m2 = c2.metric().constant_matrix();
  require((m1 - m2).cwiseAbs().maxCoeff() <= kMetricMatchTolerance,
          ErrorKind::kMetricMismatch,
          "parallel combination needs the same constant metric");
  const double rate = w.l1 * c1.rate_lambda() + w.l2 * c2.rate_lambda();
  const double bound = w.m1 * c1.bound_c() + w.m2 * c2.bound_c();
  return ContractionCertificate(
      rate, bound, c1.metric(), c1.domain(), Provenance::kCombined,
      detail::node("parallel", rate, bound,
                   {{"l1", w.l1}, {"m1", w.m1}, {"l2", w.l2}, {"m2", w.m2}}, c1,
                   c2));
}

/// Negative feedback Θ₁J₁₂Θ₂⁻¹ = −k(Θ₂J₂₁Θ₁⁻¹)ᵀ: rate min(λ₁,λ₂), bound
/// C₁ + kC₂, metric blockdiag(M₁, kM₂).
inline ContractionCertificate combine_feedback(const ContractionCertificate& c1,
                                               const ContractionCertificate& c2,
                                               double k) {
  require(k > 0.0, ErrorKind::kInvalidArgument, "feedback gain must be > 0");
  detail::require_constant(c1);
  detail::require_constant(c2);
  const double rate = std::min(c1.rate_lambda(), c2.rate_lambda());
  const double bound = c1.bound_c() + k * c2.bound_c();
  return ContractionCertificate(
      rate, bound, block_diag_metric(c1.metric(), 1.0, c2.metric(), k),
      detail::concat_domains(c1.domain(), c2.domain()), Provenance::kCombined,
      detail::node("feedback", rate, bound, {{"k", k}}, c1, c2,
                   "caller asserts Theta1 J12 Theta2^-1 = -k (Theta2 J21 "
                   "Theta1^-1)^T"));
}

/// Hierarchical coupling (J₁₂ = 0, sing²(Θ₂J₂₁Θ₁⁻¹) ≤ K) with
/// ε = √(2λ₁λ₂/K): rate (λ₁+λ₂−√(λ₁²+λ₂²))/2, bound C₁ + 2C₂λ₁λ₂/K,
/// metric blockdiag(M₁, ε²M₂).
inline ContractionCertificate combine_hierarchical(
    const ContractionCertificate& c1, const ContractionCertificate& c2,
    double bound_k) {
  require(bound_k > 0.0, ErrorKind::kInvalidArgument,
          "hierarchy bound K must be > 0");
  detail::require_constant(c1);
  detail::require_constant(c2);
  const double l1 = c1.rate_lambda();
  const double l2 = c2.rate_lambda();
  const double eps_sq = 2.0 * l1 * l2 / bound_k;
  const double rate = 0.5 * (l1 + l2 - std::sqrt(l1 * l1 + l2 * l2));
  const double bound = c1.bound_c() + eps_sq * c2.bound_c();
  return ContractionCertificate(
      rate, bound, block_diag_metric(c1.metric(), 1.0, c2.metric(), eps_sq),
      detail::concat_domains(c1.domain(), c2.domain()), Provenance::kCombined,
      detail::node("hierarchical", rate, bound,
                   {{"K", bound_k}, {"epsilon", std::sqrt(eps_sq)}}, c1, c2));
}

/// Upper estimate of sing(B_k), B_k = ½(√k·Θ₂J₂₁Θ₁⁻¹ + (Θ₁J₁₂Θ₂⁻¹)ᵀ/√k).
inline double small_gain_sing_estimate(double k, double s12, double s21) {
  const double rk = std::sqrt(k);
  return 0.5 * (rk * s21 + s12 / rk);
}

/// Minimizes the sing²(B_k) estimate over k ∈ range by golden-section search
/// on log k, seeded with the analytic optimum k = s₁₂/s₂₁.
inline std::pair<double, double> minimize_small_gain(double s12, double s21,
                                                     const KSearchRange& range) {
  require(range.k_min > 0.0 && range.k_min <= range.k_max,
          ErrorKind::kInvalidArgument, "invalid k search range");
  auto objective = [&](double logk) {
    const double s = small_gain_sing_estimate(std::exp(logk), s12, s21);
    return s * s;
  };
  const double lo0 = std::log(range.k_min);
  const double hi0 = std::log(range.k_max);
  if (s12 == 0.0 && s21 == 0.0) {
    const double k = std::clamp(1.0, range.k_min, range.k_max);
    return {k, 0.0};
  }

  double best_logk = 0.5 * (lo0 + hi0);
  if (s12 > 0.0 && s21 > 0.0)
    best_logk = std::clamp(std::log(s12 / s21), lo0, hi0);
  double best = objective(best_logk);

  constexpr double kInvPhi = 0.6180339887498949;
  constexpr double kTolLogK = 1e-10;
  double lo = lo0;
  double hi = hi0;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (hi - lo > kTolLogK) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = objective(x2);
    }
  }
  for (double cand : {x1, x2, lo0, hi0}) {
    const double f = objective(cand);
    if (f < best) {
      best = f;
      best_logk = cand;
    }
  }
  return {std::exp(best_logk), best};
}

/// Small-gain interconnection with arbitrary couplings. Applicable when
/// inf_k sing²(B_k) < λ₁λ₂; then rate (λ₁+λ₂)/2 − √(((λ₁−λ₂)/2)² + inf sing²),
/// bound C₁ + k*C₂, metric blockdiag(M₁, k*M₂).
inline SmallGainResult combine_small_gain(const ContractionCertificate& c1,
                                          const ContractionCertificate& c2,
                                          const CouplingSpec& coupling,
                                          const KSearchRange& range = {}) {
  require(coupling.j12_sup_sing.has_value() && coupling.j21_sup_sing.has_value(),
          ErrorKind::kMissingCouplingBound,
          "small gain needs both coupling suprema");
  detail::require_constant(c1);
  detail::require_constant(c2);
  const double s12 = *coupling.j12_sup_sing;
  const double s21 = *coupling.j21_sup_sing;
  require(s12 >= 0.0 && s21 >= 0.0, ErrorKind::kInvalidArgument,
          "coupling suprema must be >= 0");
  const auto [k_opt, inf_sq] = minimize_small_gain(s12, s21, range);
  SmallGainResult out;
  out.k_opt = k_opt;
  out.inf_sing_sq = inf_sq;
  const double l1 = c1.rate_lambda();
  const double l2 = c2.rate_lambda();
  out.applicable = inf_sq < l1 * l2;
  if (!out.applicable) return out;
  const double half_gap = 0.5 * (l1 - l2);
  const double rate = 0.5 * (l1 + l2) - std::sqrt(half_gap * half_gap + inf_sq);
  if (!(rate > 0.0)) {
    out.applicable = false;
    return out;
  }
  const double bound = c1.bound_c() + k_opt * c2.bound_c();
  out.certificate.emplace(
      rate, bound, block_diag_metric(c1.metric(), 1.0, c2.metric(), k_opt),
      detail::concat_domains(c1.domain(), c2.domain()), Provenance::kCombined,
      detail::node("small-gain", rate, bound,
                   {{"k", k_opt}, {"s12", s12}, {"s21", s21},
                    {"inf_sing_sq", inf_sq}},
                   c1, c2));
  return out;
}

/// ‖Θ₁J₁₂Θ₂⁻¹ + k(Θ₂J₂₁Θ₁⁻¹)ᵀ‖_max; zero when the feedback shape holds.
inline double feedback_structure_residual(const Mat& theta1, const Mat& theta2,
                                          const Mat& j12, const Mat& j21,
                                          double k) {
  const Mat lhs = theta1 * j12 * theta2.inverse();
  const Mat rhs = -k * (theta2 * j21 * theta1.inverse()).transpose();
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

/// sing²(Θ₂J₂₁Θ₁⁻¹), to compare against a claimed hierarchy bound K.
inline double hierarchy_coupling_sing_sq(const Mat& theta1, const Mat& theta2,
                                         const Mat& j21) {
  const double s =
      matalg::largest_singular_value(theta2 * j21 * theta1.inverse());
  return s * s;
}

/// sing(Θ₁J₁₂Θ₂⁻¹) and sing(Θ₂J₂₁Θ₁⁻¹) for the small-gain rule.
inline std::pair<double, double> coupling_sings(const Mat& theta1,
                                                const Mat& theta2,
                                                const Mat& j12, const Mat& j21) {
  return {matalg::largest_singular_value(theta1 * j12 * theta2.inverse()),
          matalg::largest_singular_value(theta2 * j21 * theta1.inverse())};
}

}  // namespace stocon::combine
