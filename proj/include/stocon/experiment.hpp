#pragma once

// Batch experiment runner behind the command-line tool: builds a named model
// from a JSON config, obtains a certificate, runs the ensemble and checks the
// mean-square envelope. Everything written is a pure function of the config.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stocon/analysis.hpp"
#include "stocon/combine.hpp"
#include "stocon/core.hpp"
#include "stocon/errors.hpp"
#include "stocon/io.hpp"
#include "stocon/models.hpp"
#include "stocon/sim.hpp"

namespace stocon::experiment {

using json = io::json;

enum ExitCode : int {
  kExitPass = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitNonFinite = 3,
};

enum class CertificateMode { kEstimate, kFormula, kDeclared };

struct CertificateRequest {
  CertificateMode mode = CertificateMode::kEstimate;
  double lambda = 0.0;  // declared only
  double c = 0.0;
};

struct CheckSpec {
  sim::PairMode mode = sim::PairMode::kPairNoisy;
  analysis::EnvelopeForm form = analysis::EnvelopeForm::kExpectation;
  double k_sigma = analysis::kDefaultKSigma;
  double t_from = 0.0;
};

struct ExperimentConfig {
  std::string model;
  json params = json::object();
  std::optional<DomainBox> domain;
  sim::SimConfig sim;
  CertificateRequest certificate;
  std::vector<CheckSpec> checks;
  std::string out_dir = "out";
};

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"ou", "observer", "composite",
                                                 "fn-pair", "diffusive-net"};
  return names;
}

/// Parameter defaults per model. Anything in a config's "params" overrides.
inline json default_params(const std::string& model) {
  if (model == "ou") return json{{"lambda", 1.0}, {"sigma", 1.0}, {"a0", 2.0}, {"b0", 0.0}};
  if (model == "observer")
    return json{{"plant_rate", 1.0}, {"kappa", 1.0}, {"s", 1.0},
                {"x0", 1.0},         {"xhat0", 0.0}};
  if (model == "composite")
    return json{{"u1", 10.0}, {"u2", 2.0},   {"omega", 3.0},
                {"alpha", 1.0}, {"sigma", 10.0}, {"x0", 0.0},
                {"v0", 0.0},  {"vbar0", 0.0}, {"abar0", 0.0}};
  if (model == "fn-pair" || model == "diffusive-net") {
    json p{{"a", 0.3}, {"b", 0.2}, {"c", 30.0}, {"k", 40.0}, {"sigma", 1.0},
           {"v_box", 3.0}};
    if (model == "diffusive-net") {
      p["n"] = 3;
      p["v0"] = json::array({1.0, 0.0, -1.0});
      p["w0"] = json::array({0.0, 0.0, 0.0});
    } else {
      p["v0"] = json::array({1.0, -1.0});
      p["w0"] = json::array({0.0, 0.0});
    }
    p["currents"] = json::array();
    return p;
  }
  throw Error(ErrorKind::kConfig, "unknown model '" + model + "'");
}

namespace detail {

inline sim::PairMode parse_mode(const std::string& s) {
  if (s == "pair-noisy") return sim::PairMode::kPairNoisy;
  if (s == "noise-free-vs-noisy") return sim::PairMode::kNoiseFreeVsNoisy;
  throw Error(ErrorKind::kConfig, "unknown envelope_mode '" + s + "'");
}

inline const char* mode_name(sim::PairMode m) {
  return m == sim::PairMode::kPairNoisy ? "pair-noisy" : "noise-free-vs-noisy";
}

inline analysis::EnvelopeForm parse_form(const std::string& s) {
  if (s == "expectation") return analysis::EnvelopeForm::kExpectation;
  if (s == "sharp") return analysis::EnvelopeForm::kSharp;
  throw Error(ErrorKind::kConfig, "unknown envelope form '" + s + "'");
}

inline const char* form_name(analysis::EnvelopeForm f) {
  return f == analysis::EnvelopeForm::kSharp ? "sharp" : "expectation";
}

inline double num(const json& p, const char* key) {
  require(p.contains(key) && p.at(key).is_number(), ErrorKind::kConfig,
          std::string("parameter '") + key + "' must be a number");
  return p.at(key).get<double>();
}

inline std::vector<double> num_list(const json& p, const char* key) {
  require(p.contains(key) && p.at(key).is_array(), ErrorKind::kConfig,
          std::string("parameter '") + key + "' must be a list");
  std::vector<double> out;
  for (const auto& v : p.at(key)) {
    require(v.is_number(), ErrorKind::kConfig,
            std::string("parameter '") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  try {
    ExperimentConfig cfg;
    require(j.is_object(), ErrorKind::kConfig, "config must be an object");
    const json& model = j.at("model");
    if (model.is_string()) {
      cfg.model = model.get<std::string>();
    } else {
      cfg.model = model.at("name").get<std::string>();
      if (model.contains("params")) cfg.params = model.at("params");
    }
    json params = default_params(cfg.model);
    for (const auto& [k, v] : cfg.params.items()) {
      require(params.contains(k), ErrorKind::kConfig,
              "unknown parameter '" + k + "' for model " + cfg.model);
      params[k] = v;
    }
    cfg.params = std::move(params);

    if (j.contains("sim")) {
      const json& s = j.at("sim");
      cfg.sim.dt = s.value("dt", cfg.sim.dt);
      cfg.sim.t_max = s.value("t_max", cfg.sim.t_max);
      cfg.sim.n_paths = s.value("paths", std::int64_t{1000});
      cfg.sim.master_seed = s.value("seed", std::uint64_t{0});
      cfg.sim.record_stride = s.value("record_stride", std::int64_t{1});
    } else {
      cfg.sim.n_paths = 1000;
    }
    if (j.contains("domain")) cfg.domain = io::domain_from_json(j.at("domain"));

    const std::string default_cert =
        (cfg.model == "fn-pair" || cfg.model == "diffusive-net") ? "formula"
                                                                 : "estimate";
    if (j.contains("certificate")) {
      const json& c = j.at("certificate");
      const std::string mode = c.value("mode", default_cert);
      if (mode == "estimate") {
        cfg.certificate.mode = CertificateMode::kEstimate;
      } else if (mode == "formula") {
        cfg.certificate.mode = CertificateMode::kFormula;
      } else if (mode == "declared") {
        cfg.certificate.mode = CertificateMode::kDeclared;
        cfg.certificate.lambda = c.at("lambda").get<double>();
        cfg.certificate.c = c.at("C").get<double>();
      } else {
        throw Error(ErrorKind::kConfig, "unknown certificate mode '" + mode + "'");
      }
    } else {
      cfg.certificate.mode = default_cert == "formula" ? CertificateMode::kFormula
                                                       : CertificateMode::kEstimate;
    }

    const std::string default_mode =
        cfg.model == "ou" ? "pair-noisy" : "noise-free-vs-noisy";
    if (j.contains("checks")) {
      for (const auto& c : j.at("checks")) {
        CheckSpec chk;
        chk.mode = detail::parse_mode(c.value("envelope_mode", default_mode));
        chk.form = detail::parse_form(c.value("form", std::string("expectation")));
        chk.k_sigma = c.value("k_sigma", analysis::kDefaultKSigma);
        chk.t_from = c.value("t_from", 0.0);
        require(chk.k_sigma > 0.0, ErrorKind::kConfig, "k_sigma must be > 0");
        cfg.checks.push_back(chk);
      }
    }
    if (cfg.checks.empty()) {
      CheckSpec chk;
      chk.mode = detail::parse_mode(default_mode);
      cfg.checks.push_back(chk);
    }
    for (const auto& c : cfg.checks)
      require(c.mode == cfg.checks.front().mode, ErrorKind::kConfig,
              "all checks of one experiment must share an envelope_mode");

    if (j.contains("outputs")) {
      const json& o = j.at("outputs");
      cfg.out_dir = o.is_string() ? o.get<std::string>()
                                  : o.value("dir", cfg.out_dir);
    }
    cfg.sim.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

/// Everything run_experiment needs from a model.
struct PreparedModel {
  SdeSystem certified;  // the system the certificate is about
  Metric metric;
  DomainBox domain;
  std::optional<ContractionCertificate> formula;  // closed-form certificate
  std::string formula_note;                       // why it is absent
  /// Initial V₁ in the metric (plain squared distance for identity metrics).
  double e0 = 0.0;
  std::vector<sim::PairMode> modes;
  /// Returns stats; series 0 is the squared distance the envelope bounds.
  std::function<std::vector<sim::EnsemblePairStats>(const sim::SimConfig&,
                                                    sim::PairMode)>
      simulate;
  /// Optional per-record bound on series 1 after `extra_t_from`.
  std::optional<double> extra_bound;
  double extra_t_from = 0.0;
  std::string extra_name;
};

inline PreparedModel prepare_model(const ExperimentConfig& cfg) {
  using detail::num;
  const json& p = cfg.params;
  const double t_max = cfg.sim.t_max;
  PreparedModel out;

  if (cfg.model == "ou") {
    const double lambda = num(p, "lambda");
    const double sigma = num(p, "sigma");
    const double a0 = num(p, "a0");
    const double b0 = num(p, "b0");
    const SdeSystem sys = models::build_ou(lambda, sigma);
    out.certified = sys;
    out.metric = make_identity_metric(1);
    out.domain = cfg.domain.value_or(DomainBox::uniform(1, -5.0, 5.0, t_max, 1024));
    out.formula.emplace(lambda, sigma * sigma, out.metric, out.domain,
                        Provenance::kDeclared);
    out.e0 = (a0 - b0) * (a0 - b0);
    out.modes = {sim::PairMode::kPairNoisy, sim::PairMode::kNoiseFreeVsNoisy};
    out.simulate = [sys, a0, b0](const sim::SimConfig& sc, sim::PairMode mode) {
      return std::vector<sim::EnsemblePairStats>{sim::ensemble_pair_stats(
          sys, sim::fixed_initial(Vec::Constant(1, a0), Vec::Constant(1, b0)),
          sc, std::nullopt, mode)};
    };
    return out;
  }

  if (cfg.model == "observer") {
    const double rate = num(p, "plant_rate");
    const double kappa = num(p, "kappa");
    const double s = num(p, "s");
    const double x0 = num(p, "x0");
    const double xhat0 = num(p, "xhat0");
    out.domain = cfg.domain.value_or(DomainBox::uniform(1, -5.0, 5.0, t_max, 1024));
    const auto model = models::build_observer(
        models::scalar_observer_spec(rate, kappa, s, x0, t_max), out.domain);
    out.certified = model.observer;
    out.metric = make_identity_metric(1);
    if (rate + kappa > 0.0)
      out.formula.emplace(rate + kappa, kappa * kappa * s * s, out.metric,
                          out.domain, Provenance::kDeclared);
    else
      out.formula_note = "plant_rate + kappa <= 0: observer not contracting";
    out.e0 = (xhat0 - x0) * (xhat0 - x0);
    out.modes = {sim::PairMode::kNoiseFreeVsNoisy};
    const SdeSystem sys = model.observer;
    const auto ref = model.reference;
    out.simulate = [sys, ref, xhat0](const sim::SimConfig& sc, sim::PairMode) {
      const Vec start = Vec::Constant(1, xhat0);
      return sim::ensemble_observable_stats(
          sys, [start](std::int64_t, rng::GaussianStream&) { return start; }, sc,
          {[ref](const Vec& x, double t) { return (x - ref(t)).squaredNorm(); }});
    };
    return out;
  }

  if (cfg.model == "composite") {
    models::CompositeParams cp;
    cp.u1 = num(p, "u1");
    cp.u2 = num(p, "u2");
    cp.omega = num(p, "omega");
    cp.alpha = num(p, "alpha");
    cp.sigma = num(p, "sigma");
    cp.x0 = num(p, "x0");
    cp.v0 = num(p, "v0");
    const auto obs = models::build_composite_observer(cp);
    Vec z0(2);
    z0 << num(p, "vbar0"), num(p, "abar0");
    out.certified = obs.system;
    out.metric = obs.metric;
    out.domain = cfg.domain.value_or(DomainBox::uniform(2, -50.0, 50.0, t_max, 1024));
    out.formula.emplace(obs.rate, obs.noise_bound, out.metric, out.domain,
                        Provenance::kDeclared);
    out.e0 = obs.metric.weighted_sq_norm(z0 - obs.reference_state(0.0), 0.0);
    out.modes = {sim::PairMode::kNoiseFreeVsNoisy};
    out.simulate = [obs, z0](const sim::SimConfig& sc, sim::PairMode) {
      // ‖(v̂,â) − (v,a)‖² = ‖z − z_true‖² since the readout is a shift.
      return sim::ensemble_observable_stats(
          obs.system, [z0](std::int64_t, rng::GaussianStream&) { return z0; }, sc,
          {[obs](const Vec& z, double t) {
            return (z - obs.reference_state(t)).squaredNorm();
          }});
    };
    return out;
  }

  if (cfg.model == "fn-pair" || cfg.model == "diffusive-net") {
    models::FnParams fp;
    fp.a = num(p, "a");
    fp.b = num(p, "b");
    fp.c = num(p, "c");
    fp.k = num(p, "k");
    fp.sigma = num(p, "sigma");
    fp.currents = detail::num_list(p, "currents");
    const int n_nodes =
        cfg.model == "fn-pair" ? 2 : static_cast<int>(num(p, "n"));
    require(n_nodes >= 2, ErrorKind::kConfig, "network needs n >= 2");
    for (double i : fp.currents)
      require(i == (fp.currents.empty() ? 0.0 : fp.currents.front()),
              ErrorKind::kConfig,
              "node currents must be equal for the synchronized solution to exist");
    const auto v0 = detail::num_list(p, "v0");
    const auto w0 = detail::num_list(p, "w0");
    require(static_cast<int>(v0.size()) == n_nodes &&
                static_cast<int>(w0.size()) == n_nodes,
            ErrorKind::kConfig, "v0 and w0 need one entry per node");
    const auto fn = models::build_fn_network(n_nodes, fp, num(p, "v_box"), t_max);
    Vec x0(2 * n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      x0(2 * i) = v0[static_cast<std::size_t>(i)];
      x0(2 * i + 1) = w0[static_cast<std::size_t>(i)];
    }
    out.certified = fn.network.projected;
    out.metric = fn.metric;
    out.domain = cfg.domain.value_or(fn.domain);
    if (fn.certificate)
      out.formula.emplace(fn.formula_rate, fn.formula_bound, out.metric,
                          out.domain, Provenance::kDeclared,
                          fn.certificate->provenance_tree());
    else
      out.formula_note = "k <= c: not contracting";
    const Vec y0 = fn.network.project(x0);
    out.e0 = fn.metric.weighted_sq_norm(y0, 0.0);
    out.modes = {sim::PairMode::kNoiseFreeVsNoisy};
    const SdeSystem global = fn.network.global;
    const Mat v = fn.network.projection;
    const bool pair = n_nodes == 2;
    out.simulate = [global, v, x0, pair](const sim::SimConfig& sc, sim::PairMode) {
      std::vector<sim::Observable> obs = {
          [v](const Vec& x, double) { return (v * x).squaredNorm(); }};
      if (pair) obs.push_back([](const Vec& x, double) { return std::abs(x(0) - x(2)); });
      return sim::ensemble_observable_stats(
          global, [x0](std::int64_t, rng::GaussianStream&) { return x0; }, sc, obs);
    };
    if (pair && fn.contracting) {
      out.extra_bound = fn.sync_abs_bound();
      out.extra_t_from = 0.5 * t_max;
      out.extra_name = "sync_abs";
    }
    return out;
  }

  throw Error(ErrorKind::kConfig, "unknown model '" + cfg.model + "'");
}

struct ExperimentResult {
  int exit_code = kExitPass;
  json report;
  std::optional<ContractionCertificate> certificate;
  std::vector<sim::EnsemblePairStats> stats;
  std::vector<analysis::BoundEnvelope> envelopes;
};

inline json certificate_summary(const analysis::CertificateEstimate& est) {
  return json{{"lambda", est.rate.lambda},
              {"C", est.noise.c},
              {"contracting", est.rate.contracting},
              {"witness_state", io::to_json(est.rate.witness_state)},
              {"witness_time", est.rate.witness_time},
              {"n_points", est.rate.n_points}};
}

/// Runs one experiment and writes stats.csv, envelope.csv, certificate.json
/// and report.json into cfg.out_dir (plus sync_abs.csv for oscillator pairs
/// and envelope_<i>.csv for additional checks).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult res;
  const PreparedModel model = prepare_model(cfg);
  const sim::PairMode mode = cfg.checks.front().mode;
  require(std::find(model.modes.begin(), model.modes.end(), mode) != model.modes.end(),
          ErrorKind::kConfig,
          std::string("model ") + cfg.model + " does not support envelope_mode " +
              detail::mode_name(mode));

  json report = json::object();
  report["model"] = cfg.model;

  // Certificate. The sampled estimate is always reported alongside.
  const auto est = analysis::estimate_certificate(model.certified, model.metric,
                                                  model.domain, {}, cfg.sim.workers);
  report["sampled_certificate"] = certificate_summary(est);
  std::optional<ContractionCertificate> cert;
  switch (cfg.certificate.mode) {
    case CertificateMode::kEstimate:
      cert = est.certificate;
      break;
    case CertificateMode::kFormula:
      cert = model.formula;
      break;
    case CertificateMode::kDeclared:
      cert.emplace(cfg.certificate.lambda, cfg.certificate.c, model.metric,
                   model.domain, Provenance::kDeclared);
      break;
  }

  std::filesystem::create_directories(cfg.out_dir);
  const auto path = [&](const std::string& f) {
    return (std::filesystem::path(cfg.out_dir) / f).string();
  };

  res.stats = model.simulate(cfg.sim, mode);
  const auto& msd = res.stats.front();
  io::write_text(path("stats.csv"), io::stats_csv(msd));
  if (res.stats.size() > 1 && model.extra_bound)
    io::write_text(path(model.extra_name + ".csv"), io::stats_csv(res.stats[1]));

  bool pass = true;
  json checks = json::array();
  if (!cert) {
    report["certificate_error"] =
        model.formula_note.empty() ? "no contraction certificate over the domain"
                                   : model.formula_note;
    pass = false;
  } else {
    io::write_text(path("certificate.json"), io::dump(io::to_json(*cert)));
    for (std::size_t i = 0; i < cfg.checks.size(); ++i) {
      const CheckSpec& chk = cfg.checks[i];
      const auto env = analysis::ms_bound(*cert, model.e0, chk.mode, chk.form);
      res.envelopes.push_back(env);
      io::write_text(path(i == 0 ? "envelope.csv"
                                 : "envelope_" + std::to_string(i) + ".csv"),
                     io::envelope_csv(msd.times, env));
      const auto r = analysis::verify_envelope(msd, env, chk.k_sigma, chk.t_from);
      json jr = io::to_json(r);
      jr["envelope_mode"] = detail::mode_name(chk.mode);
      jr["form"] = detail::form_name(chk.form);
      jr["t_from"] = chk.t_from;
      jr["asymptote"] = env.asymptote();
      checks.push_back(std::move(jr));
      pass = pass && r.pass;
    }
  }
  report["checks"] = std::move(checks);

  if (model.extra_bound && res.stats.size() > 1) {
    const auto& s = res.stats[1];
    double worst = -std::numeric_limits<double>::infinity();
    double worst_t = 0.0;
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.times[i] < model.extra_t_from) continue;
      sum += s.mean_sq_dist[i];
      ++n;
      if (s.mean_sq_dist[i] > worst) {
        worst = s.mean_sq_dist[i];
        worst_t = s.times[i];
      }
    }
    const bool ok = n > 0 && worst <= *model.extra_bound;
    report[model.extra_name] = json{{"pass", ok},
                                    {"bound", *model.extra_bound},
                                    {"max_mean", worst},
                                    {"max_time", worst_t},
                                    {"post_transient_mean", n > 0 ? sum / n : 0.0},
                                    {"t_from", model.extra_t_from},
                                    {"n_points", n}};
    pass = pass && ok;
  }

  report["pass"] = pass;
  io::write_text(path("report.json"), io::dump(report));
  res.report = std::move(report);
  res.certificate = cert;
  res.exit_code = pass ? kExitPass : kExitCheckFailed;
  return res;
}

/// run_experiment with errors mapped to exit codes. Messages go to `err`.
inline int run_experiment_status(const ExperimentConfig& cfg, std::string& err) {
  try {
    return run_experiment(cfg).exit_code;
  } catch (const NonFiniteError& e) {
    err = e.what();
    return kExitNonFinite;
  } catch (const Error& e) {
    err = e.what();
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err = e.what();
    return kExitConfig;
  }
}

// ---------------------------------------------------------------------------
// Certificate combination

struct CombineRequest {
  std::string rule;  // parallel | feedback | hierarchical | small-gain
  std::vector<ContractionCertificate> inputs;
  combine::SuperpositionWeights weights;
  double k = 1.0;        // feedback
  double bound_k = 1.0;  // hierarchical
  combine::CouplingSpec coupling;
  combine::KSearchRange range;
};

/// Applies a combination rule; throws Error on precondition violations.
inline ContractionCertificate combine_cmd(const CombineRequest& req) {
  require(req.inputs.size() == 2, ErrorKind::kInvalidArgument,
          "combination needs exactly two certificates");
  const auto& c1 = req.inputs[0];
  const auto& c2 = req.inputs[1];
  if (req.rule == "parallel") return combine::combine_parallel(c1, c2, req.weights);
  if (req.rule == "feedback") return combine::combine_feedback(c1, c2, req.k);
  if (req.rule == "hierarchical")
    return combine::combine_hierarchical(c1, c2, req.bound_k);
  if (req.rule == "small-gain") {
    auto r = combine::combine_small_gain(c1, c2, req.coupling, req.range);
    require(r.applicable && r.certificate.has_value(), ErrorKind::kInvalidArgument,
            "small-gain condition fails: inf sing^2 = " +
                io::fmt_double(r.inf_sing_sq) + " >= lambda1*lambda2");
    return *r.certificate;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown rule '" + req.rule + "'");
}

}  // namespace stocon::experiment
