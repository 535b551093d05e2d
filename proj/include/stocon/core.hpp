#pragma once

// Domain vocabulary shared by every module: SDE systems, metrics, sampling
// domains and contraction certificates.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stocon/errors.hpp"
#include "stocon/matalg.hpp"

namespace stocon {

/// Itô system da = f(a,t)dt + σ(a,t)dW with a ∈ ℝⁿ and W ∈ ℝᵈ.
///
/// Callbacks write into caller-owned outputs so the integrator's inner loop
/// never allocates. Outputs are resized by the wrappers before the callback
/// runs, so implementations may assume the correct shape.
class SdeSystem {
 public:
  using DriftFn = std::function<void(const Vec& x, double t, Vec& out)>;
  using MatrixFn = std::function<void(const Vec& x, double t, Mat& out)>;

  struct LipschitzGrowth {
    double k1 = 0.0;
    double k2 = 0.0;
  };

  SdeSystem() = default;

  SdeSystem(int n, int d, DriftFn drift, MatrixFn diffusion, MatrixFn jacobian,
            std::string name = {})
      : n_(n),
        d_(d),
        drift_(std::move(drift)),
        diffusion_(std::move(diffusion)),
        jacobian_(std::move(jacobian)),
        name_(std::move(name)) {
    require(n > 0 && d > 0, ErrorKind::kInvalidArgument,
            "SdeSystem dimensions must be positive");
    require(static_cast<bool>(drift_) && static_cast<bool>(diffusion_) &&
                static_cast<bool>(jacobian_),
            ErrorKind::kInvalidArgument, "SdeSystem callbacks must be set");
  }

  int n() const { return n_; }
  int d() const { return d_; }
  const std::string& name() const { return name_; }
  bool valid() const { return n_ > 0; }

  void drift(const Vec& x, double t, Vec& out) const {
    if (out.size() != n_) out.resize(n_);
    drift_(x, t, out);
  }
  void diffusion(const Vec& x, double t, Mat& out) const {
    if (out.rows() != n_ || out.cols() != d_) out.resize(n_, d_);
    diffusion_(x, t, out);
  }
  void drift_jacobian(const Vec& x, double t, Mat& out) const {
    if (out.rows() != n_ || out.cols() != n_) out.resize(n_, n_);
    jacobian_(x, t, out);
  }

  Vec drift(const Vec& x, double t) const {
    Vec out(n_);
    drift(x, t, out);
    return out;
  }
  Mat diffusion(const Vec& x, double t) const {
    Mat out(n_, d_);
    diffusion(x, t, out);
    return out;
  }
  Mat drift_jacobian(const Vec& x, double t) const {
    Mat out(n_, n_);
    drift_jacobian(x, t, out);
    return out;
  }

  const std::optional<LipschitzGrowth>& lipschitz_growth_declared() const {
    return lipschitz_growth_;
  }

  /// Records K₁ (Lipschitz) and K₂ (growth) constants. Declared metadata
  /// only; nothing checks them.
  SdeSystem with_lipschitz_growth(double k1, double k2) const {
    require(k1 > 0.0 && k2 > 0.0, ErrorKind::kInvalidArgument,
            "Lipschitz/growth constants must be positive");
    SdeSystem out = *this;
    out.lipschitz_growth_ = LipschitzGrowth{k1, k2};
    return out;
  }

  /// Same drift, σ ≡ 0.
  SdeSystem without_noise() const {
    SdeSystem out = *this;
    out.diffusion_ = [](const Vec&, double, Mat& m) { m.setZero(); };
    out.name_ = name_ + "/noise-free";
    return out;
  }

 private:
  int n_ = 0;
  int d_ = 0;
  DriftFn drift_;
  MatrixFn diffusion_;
  MatrixFn jacobian_;
  std::string name_;
  std::optional<LipschitzGrowth> lipschitz_growth_;
};

enum class MetricKind { kIdentity, kConstantMatrix, kTimeVarying };

inline const char* to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kIdentity: return "Identity";
    case MetricKind::kConstantMatrix: return "ConstantMatrix";
    case MetricKind::kTimeVarying: return "TimeVarying";
  }
  return "Unknown";
}

/// State-independent metric M(t) = Θ(t)ᵀΘ(t) with λ_min(M(t)) ≥ β.
class Metric {
 public:
  using MatrixOfTime = std::function<Mat(double t)>;

  Metric() = default;

  int n() const { return n_; }
  MetricKind kind() const { return kind_; }
  double beta() const { return beta_; }
  bool is_constant() const { return kind_ != MetricKind::kTimeVarying; }

  Mat theta(double t) const { return is_constant() ? theta_ : theta_fn_(t); }
  Mat theta_dot(double t) const {
    return is_constant() ? Mat::Zero(n_, n_) : theta_dot_fn_(t);
  }
  Mat matrix(double t) const {
    if (is_constant()) return matrix_;
    const Mat th = theta_fn_(t);
    return th.transpose() * th;
  }
  /// dM/dt = Θ̇ᵀΘ + ΘᵀΘ̇.
  Mat matrix_dot(double t) const {
    if (is_constant()) return Mat::Zero(n_, n_);
    const Mat th = theta_fn_(t);
    const Mat thd = theta_dot_fn_(t);
    return thd.transpose() * th + th.transpose() * thd;
  }

  /// xᵀM(t)x.
  double weighted_sq_norm(const Vec& x, double t) const {
    if (kind_ == MetricKind::kIdentity) return x.squaredNorm();
    if (kind_ == MetricKind::kConstantMatrix) return (theta_ * x).squaredNorm();
    return (theta_fn_(t) * x).squaredNorm();
  }

  /// Only meaningful for constant kinds.
  const Mat& constant_matrix() const {
    require(is_constant(), ErrorKind::kNonConstantMetric,
            "constant_matrix() on a time-varying metric");
    return matrix_;
  }
  const Mat& constant_theta() const {
    require(is_constant(), ErrorKind::kNonConstantMetric,
            "constant_theta() on a time-varying metric");
    return theta_;
  }

  friend Metric make_identity_metric(int n);
  friend Metric make_constant_metric(const Mat& m);
  friend Metric make_constant_metric_from_theta(const Mat& theta);
  friend Metric make_time_varying_metric(int n, MatrixOfTime theta,
                                         MatrixOfTime theta_dot, double beta);

 private:
  int n_ = 0;
  MetricKind kind_ = MetricKind::kIdentity;
  double beta_ = 1.0;
  Mat theta_;
  Mat matrix_;
  MatrixOfTime theta_fn_;
  MatrixOfTime theta_dot_fn_;
};

inline constexpr double kPositiveDefiniteTolerance = 1e-12;

inline Metric make_identity_metric(int n) {
  require(n >= 1, ErrorKind::kInvalidArgument, "metric dimension must be >= 1");
  Metric m;
  m.n_ = n;
  m.kind_ = MetricKind::kIdentity;
  m.beta_ = 1.0;
  m.theta_ = Mat::Identity(n, n);
  m.matrix_ = Mat::Identity(n, n);
  return m;
}

/// Θ is the upper Cholesky factor of m, so ΘᵀΘ = m.
inline Metric make_constant_metric(const Mat& m) {
  require(m.rows() == m.cols() && m.rows() > 0, ErrorKind::kDimensionMismatch,
          "metric matrix must be square");
  const auto eig = matalg::extreme_eigs(m);
  require(eig.lambda_min > kPositiveDefiniteTolerance,
          ErrorKind::kNotPositiveDefinite,
          "metric smallest eigenvalue " + std::to_string(eig.lambda_min));
  const Mat sym = matalg::symmetric_part(m);
  Eigen::LLT<Mat> llt(sym);
  require(llt.info() == Eigen::Success, ErrorKind::kNotPositiveDefinite,
          "Cholesky factorization failed");
  Metric out;
  out.n_ = static_cast<int>(m.rows());
  out.kind_ = MetricKind::kConstantMatrix;
  out.beta_ = eig.lambda_min;
  out.theta_ = llt.matrixU();
  out.matrix_ = sym;
  return out;
}

/// Constant metric with a caller-chosen factor Θ (M = ΘᵀΘ).
inline Metric make_constant_metric_from_theta(const Mat& theta) {
  require(theta.rows() == theta.cols() && theta.rows() > 0,
          ErrorKind::kDimensionMismatch, "theta must be square");
  const Mat m = theta.transpose() * theta;
  const auto eig = matalg::extreme_eigs(m);
  require(eig.lambda_min > kPositiveDefiniteTolerance,
          ErrorKind::kNotPositiveDefinite,
          "metric smallest eigenvalue " + std::to_string(eig.lambda_min));
  Metric out;
  out.n_ = static_cast<int>(theta.rows());
  out.kind_ = MetricKind::kConstantMatrix;
  out.beta_ = eig.lambda_min;
  out.theta_ = theta;
  out.matrix_ = m;
  return out;
}

/// β is the caller's declared lower bound; validate_metric() samples it.
inline Metric make_time_varying_metric(int n, Metric::MatrixOfTime theta,
                                       Metric::MatrixOfTime theta_dot,
                                       double beta) {
  require(n >= 1, ErrorKind::kInvalidArgument, "metric dimension must be >= 1");
  require(beta > 0.0, ErrorKind::kInvalidArgument, "beta must be positive");
  require(static_cast<bool>(theta) && static_cast<bool>(theta_dot),
          ErrorKind::kInvalidArgument, "theta callbacks must be set");
  Metric out;
  out.n_ = n;
  out.kind_ = MetricKind::kTimeVarying;
  out.beta_ = beta;
  out.theta_fn_ = std::move(theta);
  out.theta_dot_fn_ = std::move(theta_dot);
  return out;
}

/// Block-diagonal constant metric with Θ = blockdiag(√s₁Θ₁, √s₂Θ₂), i.e.
/// M = blockdiag(s₁M₁, s₂M₂).
inline Metric block_diag_metric(const Metric& m1, double s1, const Metric& m2,
                                double s2) {
  require(m1.is_constant() && m2.is_constant(), ErrorKind::kNonConstantMetric,
          "block_diag_metric needs constant metrics");
  require(s1 > 0.0 && s2 > 0.0, ErrorKind::kInvalidArgument,
          "block scales must be positive");
  return make_constant_metric_from_theta(
      matalg::block_diag(std::sqrt(s1) * m1.constant_theta(),
                         std::sqrt(s2) * m2.constant_theta()));
}

// Radical-inverse (Halton) sequence; deterministic low-discrepancy points.
inline double radical_inverse(std::uint64_t index, std::uint32_t base) {
  double inv_base = 1.0 / base;
  double f = inv_base;
  double result = 0.0;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f *= inv_base;
  }
  return result;
}

inline std::uint32_t nth_prime(int k) {
  static constexpr std::array<std::uint32_t, 64> kPrimes = {
      2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,
      43,  47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101,
      103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167,
      173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
      241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311};
  require(k >= 0 && k < static_cast<int>(kPrimes.size()),
          ErrorKind::kInvalidArgument, "Halton dimension too large");
  return kPrimes[static_cast<std::size_t>(k)];
}

struct DomainPoint {
  Vec x;
  double t = 0.0;
};

/// Axis-aligned state box × [0, t_max]. Certificates are only claimed over
/// their declared box.
class DomainBox {
 public:
  DomainBox() = default;
  DomainBox(Vec lower, Vec upper, double t_max, std::int64_t sample_count)
      : lower_(std::move(lower)),
        upper_(std::move(upper)),
        t_max_(t_max),
        sample_count_(sample_count) {
    require(lower_.size() == upper_.size() && lower_.size() > 0,
            ErrorKind::kDimensionMismatch, "domain bounds size mismatch");
    require((lower_.array() <= upper_.array()).all(),
            ErrorKind::kInvalidArgument, "domain lower must be <= upper");
    require(t_max_ >= 0.0, ErrorKind::kInvalidArgument, "t_max must be >= 0");
    require(sample_count_ >= 1, ErrorKind::kInvalidArgument,
            "sample_count must be >= 1");
  }

  static DomainBox uniform(int n, double lo, double hi, double t_max,
                           std::int64_t samples) {
    return DomainBox(Vec::Constant(n, lo), Vec::Constant(n, hi), t_max,
                     samples);
  }

  int n() const { return static_cast<int>(lower_.size()); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  double t_max() const { return t_max_; }
  std::int64_t sample_count() const { return sample_count_; }

  /// i-th Halton point (state dims first, time last). `offset` shifts the
  /// sequence so different seeds see different points.
  DomainPoint sample(std::int64_t i, std::uint64_t offset = 0) const {
    const std::uint64_t idx = static_cast<std::uint64_t>(i) + 1 + offset;
    DomainPoint p;
    p.x.resize(n());
    for (int k = 0; k < n(); ++k) {
      const double u = radical_inverse(idx, nth_prime(k));
      p.x(k) = lower_(k) + u * (upper_(k) - lower_(k));
    }
    p.t = t_max_ * radical_inverse(idx, nth_prime(n()));
    return p;
  }

  bool contains(const Vec& x, double t) const {
    return x.size() == lower_.size() && (x.array() >= lower_.array()).all() &&
           (x.array() <= upper_.array()).all() && t >= 0.0 && t <= t_max_;
  }

 private:
  Vec lower_;
  Vec upper_;
  double t_max_ = 0.0;
  std::int64_t sample_count_ = 1;
};

enum class Provenance { kEstimated, kDeclared, kCombined };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kEstimated: return "Estimated";
    case Provenance::kDeclared: return "Declared";
    case Provenance::kCombined: return "Combined";
  }
  return "Unknown";
}

/// Expression tree recording how a certificate was obtained.
struct ProvenanceNode {
  Provenance kind = Provenance::kDeclared;
  std::string rule;  // empty for leaves
  double lambda = 0.0;
  double c = 0.0;
  std::vector<std::pair<std::string, double>> params;
  std::vector<std::shared_ptr<const ProvenanceNode>> inputs;
  std::string note;
};

/// Asserts H1'/H2' over `domain`: contraction rate λ > 0 and noise bound
/// C ≥ 0 in `metric`.
class ContractionCertificate {
 public:
  ContractionCertificate(double rate_lambda, double bound_c, Metric metric,
                         DomainBox domain, Provenance provenance,
                         std::shared_ptr<const ProvenanceNode> tree = nullptr)
      : rate_lambda_(rate_lambda),
        bound_c_(bound_c),
        metric_(std::move(metric)),
        domain_(std::move(domain)),
        provenance_(provenance),
        tree_(std::move(tree)) {
    require(std::isfinite(rate_lambda_) && rate_lambda_ > 0.0,
            ErrorKind::kInvalidArgument, "certificate rate must be > 0");
    require(std::isfinite(bound_c_) && bound_c_ >= 0.0,
            ErrorKind::kInvalidArgument, "certificate bound must be >= 0");
    require(metric_.n() == domain_.n(), ErrorKind::kDimensionMismatch,
            "certificate metric and domain dimensions differ");
    if (!tree_) {
      auto leaf = std::make_shared<ProvenanceNode>();
      leaf->kind = provenance_;
      leaf->lambda = rate_lambda_;
      leaf->c = bound_c_;
      tree_ = std::move(leaf);
    }
  }

  double rate_lambda() const { return rate_lambda_; }
  double bound_c() const { return bound_c_; }
  const Metric& metric() const { return metric_; }
  const DomainBox& domain() const { return domain_; }
  Provenance provenance() const { return provenance_; }
  const std::shared_ptr<const ProvenanceNode>& provenance_tree() const {
    return tree_;
  }
  int n() const { return metric_.n(); }

 private:
  double rate_lambda_;
  double bound_c_;
  Metric metric_;
  DomainBox domain_;
  Provenance provenance_;
  std::shared_ptr<const ProvenanceNode> tree_;
};

struct ValidationReport {
  bool pass = true;
  double max_jacobian_discrepancy = 0.0;
  Vec worst_state;
  double worst_time = 0.0;
  std::int64_t non_finite_count = 0;
  std::int64_t n_points = 0;
  std::vector<std::string> issues;
};

inline constexpr double kJacobianTolerance = 1e-5;

/// Centered finite-difference Jacobian with step h = 1e-6·(1+‖x‖).
inline Mat finite_difference_jacobian(const SdeSystem& sys, const Vec& x,
                                      double t) {
  const int n = sys.n();
  const double h = 1e-6 * (1.0 + x.norm());
  Mat jac(n, n);
  Vec xp = x;
  Vec fp(n);
  Vec fm(n);
  for (int j = 0; j < n; ++j) {
    xp(j) = x(j) + h;
    sys.drift(xp, t, fp);
    xp(j) = x(j) - h;
    sys.drift(xp, t, fm);
    xp(j) = x(j);
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// Samples `dom` and compares the analytic Jacobian with finite differences;
/// also flags non-finite drift/diffusion values. Failures are report entries.
inline ValidationReport validate_system(const SdeSystem& sys,
                                        const DomainBox& dom,
                                        std::uint64_t seed) {
  ValidationReport report;
  if (dom.n() != sys.n()) {
    report.pass = false;
    report.issues.push_back("domain dimension differs from system dimension");
    return report;
  }
  const std::uint64_t offset = seed % 1000003ULL;
  Mat jac;
  Mat sig;
  Vec f;
  for (std::int64_t i = 0; i < dom.sample_count(); ++i) {
    const DomainPoint p = dom.sample(i, offset);
    ++report.n_points;
    sys.drift(p.x, p.t, f);
    sys.diffusion(p.x, p.t, sig);
    sys.drift_jacobian(p.x, p.t, jac);
    if (!f.allFinite() || !sig.allFinite() || !jac.allFinite()) {
      ++report.non_finite_count;
      continue;
    }
    const Mat fd = finite_difference_jacobian(sys, p.x, p.t);
    const double scale = std::max(1.0, jac.cwiseAbs().maxCoeff());
    const double disc = (jac - fd).cwiseAbs().maxCoeff() / scale;
    if (report.worst_state.size() == 0 ||
        disc > report.max_jacobian_discrepancy) {
      report.max_jacobian_discrepancy = disc;
      report.worst_state = p.x;
      report.worst_time = p.t;
    }
  }
  if (report.non_finite_count > 0) {
    report.pass = false;
    report.issues.push_back(std::to_string(report.non_finite_count) +
                            " sample(s) produced non-finite values");
  }
  if (!(report.max_jacobian_discrepancy < kJacobianTolerance)) {
    report.pass = false;
    report.issues.push_back("Jacobian disagrees with finite differences");
  }
  return report;
}

struct MetricValidationReport {
  bool pass = true;
  double min_eigenvalue = 0.0;
  double max_theta_dot_discrepancy = 0.0;
  std::vector<std::string> issues;
};

/// Checks λ_min(M(t)) ≥ β and Θ̇ against finite differences of Θ at
/// `samples` evenly spaced times in [0, t_max].
inline MetricValidationReport validate_metric(const Metric& metric,
                                              double t_max, int samples) {
  MetricValidationReport report;
  report.min_eigenvalue = std::numeric_limits<double>::infinity();
  const int count = std::max(samples, 1);
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : t_max * i / (count - 1);
    const double lmin = matalg::extreme_eigs(metric.matrix(t)).lambda_min;
    report.min_eigenvalue = std::min(report.min_eigenvalue, lmin);
    if (!metric.is_constant()) {
      const double h = 1e-6 * (1.0 + std::abs(t));
      const Mat fd = (metric.theta(t + h) - metric.theta(t - h)) / (2.0 * h);
      const Mat an = metric.theta_dot(t);
      const double scale = std::max(1.0, an.cwiseAbs().maxCoeff());
      report.max_theta_dot_discrepancy =
          std::max(report.max_theta_dot_discrepancy,
                   (an - fd).cwiseAbs().maxCoeff() / scale);
    }
  }
  if (report.min_eigenvalue < metric.beta() * (1.0 - 1e-12)) {
    report.pass = false;
    report.issues.push_back("lambda_min(M(t)) below declared beta");
  }
  if (!(report.max_theta_dot_discrepancy < kJacobianTolerance)) {
    report.pass = false;
    report.issues.push_back("theta_dot disagrees with finite differences");
  }
  return report;
}

}  // namespace stocon
