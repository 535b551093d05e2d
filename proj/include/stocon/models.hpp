#pragma once

// Builders for the worked systems: Ornstein–Uhlenbeck, noisy linear-measurement
// observers, the composite-variable velocity estimator, and diffusively coupled
// networks (FitzHugh–Nagumo in particular).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stocon/analysis.hpp"
#include "stocon/core.hpp"
#include "stocon/matalg.hpp"

namespace stocon::models {

// ---------------------------------------------------------------------------
// Ornstein–Uhlenbeck

/// da = −λa dt + σ dW.
inline SdeSystem build_ou(double lambda, double sigma) {
  require(lambda > 0.0, ErrorKind::kInvalidArgument, "OU lambda must be > 0");
  return SdeSystem(
      1, 1, [lambda](const Vec& x, double, Vec& out) { out(0) = -lambda * x(0); },
      [sigma](const Vec&, double, Mat& out) { out(0, 0) = sigma; },
      [lambda](const Vec&, double, Mat& out) { out(0, 0) = -lambda; }, "ou");
}

// ---------------------------------------------------------------------------
// Observers with noisy linear measurements

using MatrixOfTime = std::function<Mat(double t)>;
using VectorOfTime = std::function<Vec(double t)>;

/// Dense-output solution of a deterministic ODE: classical RK4 on a uniform
/// grid with cubic Hermite interpolation between nodes.
class OdeReference {
 public:
  OdeReference(const SdeSystem& plant, Vec x0, double t_max, double h)
      : h_(h) {
    require(h > 0.0 && t_max > 0.0, ErrorKind::kInvalidArgument,
            "reference grid needs h > 0 and t_max > 0");
    require(x0.size() == plant.n(), ErrorKind::kDimensionMismatch,
            "reference initial state");
    const auto steps = static_cast<std::size_t>(std::ceil(t_max / h));
    states_.reserve(steps + 1);
    slopes_.reserve(steps + 1);
    Vec x = std::move(x0);
    for (std::size_t i = 0;; ++i) {
      const double t = h * static_cast<double>(i);
      states_.push_back(x);
      slopes_.push_back(plant.drift(x, t));
      if (i == steps) break;
      const Vec k1 = slopes_.back();
      const Vec k2 = plant.drift(x + 0.5 * h * k1, t + 0.5 * h);
      const Vec k3 = plant.drift(x + 0.5 * h * k2, t + 0.5 * h);
      const Vec k4 = plant.drift(x + h * k3, t + h);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }

  double t_max() const { return h_ * static_cast<double>(states_.size() - 1); }

  Vec operator()(double t) const {
    require(t >= 0.0 && t <= t_max() * (1.0 + 1e-12), ErrorKind::kInvalidArgument,
            "reference queried outside its grid");
    auto i = static_cast<std::size_t>(t / h_);
    i = std::min(i, states_.size() - 2);
    const double s = (t - h_ * static_cast<double>(i)) / h_;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * states_[i] + h10 * h_ * slopes_[i] + h01 * states_[i + 1] +
           h11 * h_ * slopes_[i + 1];
  }

 private:
  double h_;
  std::vector<Vec> states_;
  std::vector<Vec> slopes_;
};

struct ObserverSpec {
  SdeSystem plant;       // noise-free plant ẋ = f(x,t)
  MatrixOfTime h;        // m×n measurement matrix H(t)
  MatrixOfTime k_gain;   // n×m injection K(t)
  MatrixOfTime sigma_meas;  // m×m measurement noise intensity Σ(t)
  int m = 1;
  /// True plant trajectory x(t). When absent it is computed from plant_x0
  /// with OdeReference over [0, reference_t_max].
  VectorOfTime reference;
  Vec plant_x0;
  double reference_t_max = 0.0;
  double reference_dt = 1e-3;
};

struct ObserverModel {
  /// dx̂ = (f(x̂,t) + K(t)H(t)(x(t) − x̂))dt + K(t)Σ(t)dW.
  SdeSystem observer;
  VectorOfTime reference;
  double lambda = 0.0;  // inf |λ_max(∂f/∂x − KH)| over the domain
  bool contracting = false;
  double c = 0.0;  // sup tr(ΣᵀKᵀKΣ)
  bool injects = true;
};

inline ObserverModel build_observer(const ObserverSpec& spec,
                                    const DomainBox& dom) {
  const SdeSystem& plant = spec.plant;
  const int n = plant.n();
  const int m = spec.m;
  require(plant.valid() && m >= 1, ErrorKind::kDimensionMismatch,
          "observer needs a plant and m >= 1");
  require(static_cast<bool>(spec.h) && static_cast<bool>(spec.k_gain) &&
              static_cast<bool>(spec.sigma_meas),
          ErrorKind::kInvalidArgument, "observer matrices must be set");
  require(dom.n() == n, ErrorKind::kDimensionMismatch, "observer domain");
  {
    const Mat h0 = spec.h(0.0);
    const Mat k0 = spec.k_gain(0.0);
    const Mat s0 = spec.sigma_meas(0.0);
    require(h0.rows() == m && h0.cols() == n, ErrorKind::kDimensionMismatch,
            "H(t) must be m x n");
    require(k0.rows() == n && k0.cols() == m, ErrorKind::kDimensionMismatch,
            "K(t) must be n x m");
    require(s0.rows() == m && s0.cols() == m, ErrorKind::kDimensionMismatch,
            "Sigma(t) must be m x m");
  }

  VectorOfTime reference = spec.reference;
  if (!reference) {
    require(spec.plant_x0.size() == n && spec.reference_t_max > 0.0,
            ErrorKind::kInvalidArgument,
            "observer needs a reference or plant_x0 + reference_t_max");
    auto ode = std::make_shared<const OdeReference>(
        plant.without_noise(), spec.plant_x0, spec.reference_t_max,
        spec.reference_dt);
    reference = [ode](double t) { return (*ode)(t); };
  }

  auto h = spec.h;
  auto k = spec.k_gain;
  auto sg = spec.sigma_meas;
  SdeSystem observer(
      n, m,
      [plant, h, k, reference](const Vec& xh, double t, Vec& out) {
        plant.drift(xh, t, out);
        out.noalias() += k(t) * (h(t) * (reference(t) - xh));
      },
      [k, sg](const Vec&, double t, Mat& out) { out = k(t) * sg(t); },
      [plant, h, k](const Vec& xh, double t, Mat& out) {
        plant.drift_jacobian(xh, t, out);
        out.noalias() -= k(t) * h(t);
      },
      "observer");

  ObserverModel model;
  model.observer = observer;
  model.reference = reference;
  const Metric id = make_identity_metric(n);
  const auto rate = analysis::estimate_rate(observer, id, dom);
  const auto noise = analysis::estimate_noise_bound(observer, id, dom);
  model.contracting = rate.contracting;
  model.lambda = rate.lambda;
  model.c = noise.c;
  double max_kh = 0.0;
  for (std::int64_t i = 0; i < dom.sample_count(); ++i) {
    const double t = dom.sample(i).t;
    max_kh = std::max(max_kh, (k(t) * h(t)).cwiseAbs().maxCoeff());
  }
  model.injects = max_kh > 0.0;
  return model;
}

/// Asymptotic observer error bound C/(2λ).
inline double observer_asymptotic_bound(const ObserverModel& m) {
  return m.c / (2.0 * m.lambda);
}

enum class GainFlag { kNone, kNotContracting, kNoInjection };

inline const char* to_string(GainFlag f) {
  switch (f) {
    case GainFlag::kNone: return "";
    case GainFlag::kNotContracting: return "not-contracting";
    case GainFlag::kNoInjection: return "no-injection";
  }
  return "";
}

struct GainRow {
  double gain = 0.0;
  double lambda = 0.0;
  double c = 0.0;
  double c_over_lambda = 0.0;
  double asymptotic_bound = 0.0;  // C/(2λ)
  GainFlag flag = GainFlag::kNone;
};

/// Observer gain trade-off table, sorted by C/(2λ). Non-contracting gains are
/// kept (flagged) and sorted last.
inline std::vector<GainRow> gain_sweep(
    const std::function<ObserverSpec(double gain)>& spec_for_gain,
    const std::vector<double>& gains, const DomainBox& dom) {
  std::vector<GainRow> rows;
  rows.reserve(gains.size());
  for (double g : gains) {
    const ObserverModel m = build_observer(spec_for_gain(g), dom);
    GainRow row;
    row.gain = g;
    row.lambda = m.lambda;
    row.c = m.c;
    if (!m.contracting) {
      row.flag = GainFlag::kNotContracting;
      row.c_over_lambda = std::numeric_limits<double>::infinity();
      row.asymptotic_bound = std::numeric_limits<double>::infinity();
    } else {
      row.c_over_lambda = m.c / m.lambda;
      row.asymptotic_bound = 0.5 * row.c_over_lambda;
      if (!m.injects) row.flag = GainFlag::kNoInjection;
    }
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GainRow& a, const GainRow& b) {
    return a.asymptotic_bound < b.asymptotic_bound;
  });
  return rows;
}

/// The scalar example ẋ = −p·x, y = x + sΣξ, K = κ.
inline ObserverSpec scalar_observer_spec(double plant_rate, double kappa,
                                         double s, double x0, double t_max) {
  ObserverSpec spec;
  spec.plant = SdeSystem(
      1, 1,
      [plant_rate](const Vec& x, double, Vec& out) { out(0) = -plant_rate * x(0); },
      [](const Vec&, double, Mat& out) { out.setZero(); },
      [plant_rate](const Vec&, double, Mat& out) { out(0, 0) = -plant_rate; },
      "scalar-plant");
  spec.m = 1;
  spec.h = [](double) { return Mat::Identity(1, 1); };
  spec.k_gain = [kappa](double) { return Mat::Constant(1, 1, kappa); };
  spec.sigma_meas = [s](double) { return Mat::Constant(1, 1, s); };
  spec.plant_x0 = Vec::Constant(1, x0);
  spec.reference_t_max = t_max;
  return spec;
}

// ---------------------------------------------------------------------------
// Composite-variable velocity estimator

struct Motion {
  double x = 0.0;
  double v = 0.0;
  double a = 0.0;
};

/// Closed form of ẍ = −U₁ω²sin(ωt) + 2U₂ from (x₀, v₀).
inline Motion true_motion(double u1, double u2, double omega, double x0,
                          double v0, double t) {
  const double s = std::sin(omega * t);
  const double c = std::cos(omega * t);
  Motion m;
  m.a = -u1 * omega * omega * s + 2.0 * u2;
  m.v = v0 + u1 * omega * (c - 1.0) + 2.0 * u2 * t;
  m.x = x0 + v0 * t + u1 * (s - omega * t) + u2 * t * t;
  return m;
}

struct CompositeParams {
  double u1 = 10.0;
  double u2 = 2.0;
  double omega = 3.0;
  double alpha = 1.0;
  double sigma = 10.0;
  double x0 = 0.0;
  double v0 = 0.0;
};

struct CompositeObserver {
  CompositeParams params;
  /// State z = (v̄, ā), driven by the true position x(t).
  SdeSystem system;
  Metric metric;  // M_α
  double beta_alpha = 0.0;
  double rate = 0.0;         // α/2
  double noise_bound = 0.0;  // α⁶σ²/2
  double asymptotic_bound = 0.0;  // α⁵σ²/(2β_α)
  Mat a_matrix;
  Mat b_matrix;

  /// (v̂, â) = (v̄ + αx, ā + α²x).
  Vec readout(const Vec& z, double t) const {
    const Motion m = true_motion(params.u1, params.u2, params.omega, params.x0,
                                 params.v0, t);
    Vec out(2);
    out << z(0) + params.alpha * m.x, z(1) + params.alpha * params.alpha * m.x;
    return out;
  }

  /// Noise-free observer state whose readout equals the true (v, a).
  Vec reference_state(double t) const {
    const Motion m = true_motion(params.u1, params.u2, params.omega, params.x0,
                                 params.v0, t);
    Vec z(2);
    z << m.v - params.alpha * m.x, m.a - params.alpha * params.alpha * m.x;
    return z;
  }
};

/// β_α = λ_min(M_α) = (1 + α² − √(α⁴ − α² + 1))/4.
inline double composite_beta(double alpha) {
  const double a2 = alpha * alpha;
  return (1.0 + a2 - std::sqrt(a2 * a2 - a2 + 1.0)) / 4.0;
}

/// Observer with α_v = α, α_a = α²:
///   dz = (A z + B(x, x)ᵀ − (0, U₁ω³cos ωt))dt + B·diag(σ, σ)dW,
///   A = [[−α, 1], [−α², 0]],  B = diag(α_a − α_v², −α_aα_v).
inline CompositeObserver build_composite_observer(const CompositeParams& p) {
  require(p.alpha > 0.0, ErrorKind::kInvalidArgument, "alpha must be > 0");
  const double alpha_v = p.alpha;
  const double alpha_a = p.alpha * p.alpha;
  Mat a(2, 2);
  a << -alpha_v, 1.0, -alpha_a, 0.0;
  Mat b = Mat::Zero(2, 2);
  b(0, 0) = alpha_a - alpha_v * alpha_v;
  b(1, 1) = -alpha_a * alpha_v;
  const Mat g = b * (p.sigma * Mat::Identity(2, 2));

  CompositeObserver out;
  out.params = p;
  out.a_matrix = a;
  out.b_matrix = b;
  out.system = SdeSystem(
      2, 2,
      [a, b, p](const Vec& z, double t, Vec& f) {
        const Motion m = true_motion(p.u1, p.u2, p.omega, p.x0, p.v0, t);
        f.noalias() = a * z;
        f(0) += (b(0, 0) + b(0, 1)) * m.x;
        f(1) += (b(1, 0) + b(1, 1)) * m.x -
                p.u1 * p.omega * p.omega * p.omega * std::cos(p.omega * t);
      },
      [g](const Vec&, double, Mat& out) { out = g; },
      [a](const Vec&, double, Mat& out) { out = a; }, "composite");

  Mat m(2, 2);
  m << p.alpha * p.alpha, -p.alpha / 2.0, -p.alpha / 2.0, 1.0;
  m *= 0.5;
  out.metric = make_constant_metric(m);
  out.beta_alpha = composite_beta(p.alpha);
  out.rate = p.alpha / 2.0;
  out.noise_bound = std::pow(p.alpha, 6) * p.sigma * p.sigma / 2.0;
  out.asymptotic_bound =
      std::pow(p.alpha, 5) * p.sigma * p.sigma / (2.0 * out.beta_alpha);
  return out;
}

// ---------------------------------------------------------------------------
// Diffusively coupled networks

using NodeDriftFn =
    std::function<void(int node, const Vec& x, double t, Vec& out)>;
using NodeMatrixFn =
    std::function<void(int node, const Vec& x, double t, Mat& out)>;

struct CouplingGain {
  int i = 0;  // receiving node
  int j = 0;  // source node
  Mat k;      // K_ij in  dx_i ∋ K_ij (x_j − x_i) dt
};

struct NetworkSpec {
  int n_nodes = 0;
  int node_dim = 0;
  int node_noise_dim = 0;
  NodeDriftFn node_drift;
  NodeMatrixFn node_jacobian;
  NodeMatrixFn node_diffusion;
  std::vector<CouplingGain> coupling_gains;
  Mat laplacian;  // (n·node_dim)²
};

/// L with blocks L_ii = Σ_j K_ij, L_ij = −K_ij, so −Lx̂ reproduces the
/// diffusive coupling terms.
inline Mat assemble_laplacian(int n_nodes, int node_dim,
                              const std::vector<CouplingGain>& gains) {
  const int dim = n_nodes * node_dim;
  Mat l = Mat::Zero(dim, dim);
  for (const auto& g : gains) {
    require(g.i >= 0 && g.i < n_nodes && g.j >= 0 && g.j < n_nodes && g.i != g.j,
            ErrorKind::kInvalidArgument, "coupling node index");
    require(g.k.rows() == node_dim && g.k.cols() == node_dim,
            ErrorKind::kDimensionMismatch, "coupling gain shape");
    l.block(g.i * node_dim, g.i * node_dim, node_dim, node_dim) += g.k;
    l.block(g.i * node_dim, g.j * node_dim, node_dim, node_dim) -= g.k;
  }
  return l;
}

/// Helmert basis of the complement of span{1}, Kronecker'd with I_dim: rows
/// are orthonormal and annihilate synchronized states.
inline Mat helmert_projection(int n_nodes, int node_dim) {
  require(n_nodes >= 2 && node_dim >= 1, ErrorKind::kInvalidArgument,
          "projection needs >= 2 nodes");
  Mat h = Mat::Zero(n_nodes - 1, n_nodes);
  for (int r = 0; r < n_nodes - 1; ++r) {
    const double k = r + 1;
    const double scale = 1.0 / std::sqrt(k * (k + 1.0));
    for (int c = 0; c <= r; ++c) h(r, c) = scale;
    h(r, r + 1) = -k * scale;
  }
  Mat v = Mat::Zero((n_nodes - 1) * node_dim, n_nodes * node_dim);
  for (int r = 0; r < n_nodes - 1; ++r)
    for (int c = 0; c < n_nodes; ++c)
      v.block(r * node_dim, c * node_dim, node_dim, node_dim) =
          h(r, c) * Mat::Identity(node_dim, node_dim);
  return v;
}

/// Σ_{i<j} ‖x_i − x_j‖².
inline double pairwise_sq_sum(const Vec& x, int n_nodes, int node_dim) {
  double s = 0.0;
  for (int i = 0; i < n_nodes; ++i)
    for (int j = i + 1; j < n_nodes; ++j)
      s += (x.segment(i * node_dim, node_dim) - x.segment(j * node_dim, node_dim))
               .squaredNorm();
  return s;
}

struct DiffusiveNetwork {
  NetworkSpec spec;
  SdeSystem global;     // dx̂ = (f̂(x̂,t) − Lx̂)dt + σ̂ dW
  Mat projection;       // V
  SdeSystem projected;  // ŷ = Vx̂

  Vec project(const Vec& x) const { return projection * x; }
  Vec reconstruct(const Vec& y) const { return projection.transpose() * y; }

  /// V·Ĵ(x̂)·Vᵀ − VLVᵀ at a full network state.
  Mat projected_jacobian_at(const Vec& x, double t) const {
    return projection * global.drift_jacobian(x, t) * projection.transpose();
  }
};

inline constexpr double kLaplacianTolerance = 1e-12;

inline DiffusiveNetwork build_diffusive_network(NetworkSpec spec) {
  const int nn = spec.n_nodes;
  const int nd = spec.node_dim;
  const int nw = spec.node_noise_dim;
  require(nn >= 2 && nd >= 1 && nw >= 1, ErrorKind::kInvalidArgument,
          "network dimensions");
  require(static_cast<bool>(spec.node_drift) &&
              static_cast<bool>(spec.node_jacobian) &&
              static_cast<bool>(spec.node_diffusion),
          ErrorKind::kInvalidArgument, "network node callbacks must be set");
  const int dim = nn * nd;
  if (spec.laplacian.size() == 0)
    spec.laplacian = assemble_laplacian(nn, nd, spec.coupling_gains);
  require(spec.laplacian.rows() == dim && spec.laplacian.cols() == dim,
          ErrorKind::kDimensionMismatch, "laplacian shape");
  // L(1⊗v) = 0 for all v  ⇔  block row sums vanish.
  for (int r = 0; r < nn; ++r) {
    Mat row_sum = Mat::Zero(nd, nd);
    for (int c = 0; c < nn; ++c) row_sum += spec.laplacian.block(r * nd, c * nd, nd, nd);
    require(row_sum.cwiseAbs().maxCoeff() <= kLaplacianTolerance,
            ErrorKind::kLaplacianNotDiffusive,
            "laplacian does not annihilate the synchronization subspace");
  }

  DiffusiveNetwork net;
  net.projection = helmert_projection(nn, nd);
  const Mat lap = spec.laplacian;
  const Mat v = net.projection;

  auto global_drift = [spec, lap, nn, nd](const Vec& x, double t, Vec& out) {
    Vec xi(nd);
    Vec fi(nd);
    for (int i = 0; i < nn; ++i) {
      xi = x.segment(i * nd, nd);
      spec.node_drift(i, xi, t, fi);
      out.segment(i * nd, nd) = fi;
    }
    out.noalias() -= lap * x;
  };
  auto global_diffusion = [spec, nn, nd, nw](const Vec& x, double t, Mat& out) {
    out.setZero();
    Vec xi(nd);
    Mat si(nd, nw);
    for (int i = 0; i < nn; ++i) {
      xi = x.segment(i * nd, nd);
      spec.node_diffusion(i, xi, t, si);
      out.block(i * nd, i * nw, nd, nw) = si;
    }
  };
  auto global_jacobian = [spec, lap, nn, nd](const Vec& x, double t, Mat& out) {
    out = -lap;
    Vec xi(nd);
    Mat ji(nd, nd);
    for (int i = 0; i < nn; ++i) {
      xi = x.segment(i * nd, nd);
      spec.node_jacobian(i, xi, t, ji);
      out.block(i * nd, i * nd, nd, nd) += ji;
    }
  };
  net.global = SdeSystem(dim, nn * nw, global_drift, global_diffusion,
                         global_jacobian, "diffusive-network");

  const int pdim = (nn - 1) * nd;
  const SdeSystem global = net.global;
  net.projected = SdeSystem(
      pdim, nn * nw,
      [global, v](const Vec& y, double t, Vec& out) {
        // V f̂(Vᵀy) − VLVᵀy  =  V (f̂(Vᵀy) − L Vᵀy).
        const Vec x = v.transpose() * y;
        out.noalias() = v * global.drift(x, t);
      },
      [global, v](const Vec& y, double t, Mat& out) {
        const Vec x = v.transpose() * y;
        out.noalias() = v * global.diffusion(x, t);
      },
      [global, v](const Vec& y, double t, Mat& out) {
        const Vec x = v.transpose() * y;
        out.noalias() = v * global.drift_jacobian(x, t) * v.transpose();
      },
      "diffusive-network/projected");
  net.spec = std::move(spec);
  return net;
}

// ---------------------------------------------------------------------------
// FitzHugh–Nagumo oscillators with mean-field diffusive coupling

struct FnParams {
  double a = 0.3;
  double b = 0.2;
  double c = 30.0;
  double k = 40.0;
  double sigma = 1.0;
  std::vector<double> currents;  // I_i, zero when absent
};

/// Node i:  dv = (c(v + w − v³/3 + I_i) + k(v̄ − v))dt + σ dW_i,
///          dw = −(1/c)(v − a + b w)dt,
/// where v̄ is the network mean of v. The coupling is K_ij = (k/n)·e_v e_vᵀ.
inline NetworkSpec fn_network_spec(int n_nodes, const FnParams& p) {
  require(n_nodes >= 2, ErrorKind::kInvalidArgument, "FN network needs >= 2 nodes");
  require(p.c != 0.0, ErrorKind::kInvalidArgument, "FN c must be non-zero");
  std::vector<double> currents = p.currents;
  currents.resize(static_cast<std::size_t>(n_nodes), 0.0);
  NetworkSpec spec;
  spec.n_nodes = n_nodes;
  spec.node_dim = 2;
  spec.node_noise_dim = 1;
  spec.node_drift = [p, currents](int i, const Vec& x, double, Vec& out) {
    const double v = x(0);
    const double w = x(1);
    out(0) = p.c * (v + w - v * v * v / 3.0 + currents[static_cast<std::size_t>(i)]);
    out(1) = -(v - p.a + p.b * w) / p.c;
  };
  spec.node_jacobian = [p](int, const Vec& x, double, Mat& out) {
    const double v = x(0);
    out << p.c * (1.0 - v * v), p.c, -1.0 / p.c, -p.b / p.c;
  };
  spec.node_diffusion = [p](int, const Vec&, double, Mat& out) {
    out << p.sigma, 0.0;
  };
  Mat gain = Mat::Zero(2, 2);
  gain(0, 0) = p.k / n_nodes;
  for (int i = 0; i < n_nodes; ++i)
    for (int j = 0; j < n_nodes; ++j)
      if (i != j) spec.coupling_gains.push_back({i, j, gain});
  spec.laplacian = assemble_laplacian(n_nodes, 2, spec.coupling_gains);
  return spec;
}

struct FnNetwork {
  FnParams params;
  DiffusiveNetwork network;
  /// I ⊗ diag(1, c²) on the projected coordinates.
  Metric metric;
  /// min(k − c, b/c); positive iff k > c.
  double formula_rate = 0.0;
  bool contracting = false;
  /// tr(σ̂ᵀVᵀMVσ̂) = (n−1)σ².
  double formula_bound = 0.0;
  /// Declared certificate from the closed-form rate; absent when k ≤ c.
  std::optional<ContractionCertificate> certificate;
  DomainBox domain;

  /// σ/√(β·λ): bound on the mean |v₁ − v₂| (pairs only).
  double sync_abs_bound() const {
    return params.sigma / std::sqrt(metric.beta() * formula_rate);
  }
  /// n·C/(2λ) bound on Σ_{i<j}‖x_i − x_j‖² after transients (scaled by 1/β).
  double pairwise_bound() const {
    return network.spec.n_nodes * formula_bound /
           (2.0 * formula_rate * metric.beta());
  }
};

inline FnNetwork build_fn_network(int n_nodes, const FnParams& p,
                                  double v_box = 3.0, double t_max = 40.0,
                                  std::int64_t samples = 4096) {
  FnNetwork out;
  out.params = p;
  out.network = build_diffusive_network(fn_network_spec(n_nodes, p));
  const int pdim = (n_nodes - 1) * 2;
  Mat theta = Mat::Zero(pdim, pdim);
  for (int r = 0; r < n_nodes - 1; ++r) {
    theta(2 * r, 2 * r) = 1.0;
    theta(2 * r + 1, 2 * r + 1) = std::abs(p.c);
  }
  out.metric = make_constant_metric_from_theta(theta);
  out.formula_rate = std::min(p.k - p.c, p.b / p.c);
  out.contracting = p.k > p.c && out.formula_rate > 0.0;
  out.formula_bound = (n_nodes - 1) * p.sigma * p.sigma;
  out.domain = DomainBox::uniform(pdim, -v_box, v_box, t_max, samples);
  if (out.contracting) {
    auto leaf = std::make_shared<ProvenanceNode>();
    leaf->kind = Provenance::kDeclared;
    leaf->lambda = out.formula_rate;
    leaf->c = out.formula_bound;
    leaf->note = "FitzHugh-Nagumo closed form: rate min(k-c, b/c), bound (n-1)sigma^2";
    out.certificate.emplace(out.formula_rate, out.formula_bound, out.metric,
                            out.domain, Provenance::kDeclared, leaf);
  }
  return out;
}

inline FnNetwork build_fn_pair(const FnParams& p) { return build_fn_network(2, p); }

}  // namespace stocon::models
