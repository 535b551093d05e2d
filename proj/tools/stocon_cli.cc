// stocon: run contraction experiments, estimate certificates, combine them.
//
//   stocon run --model ou --lambda 1 --sigma 1 --a0 2 --b0 0
//   stocon run --preset paper-fig1 --out results/fig1
//   stocon certify --model composite --out cert.json
//   stocon combine --rule feedback --k 4 c1.json c2.json --out combined.json

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stocon/stocon.hpp"

#ifndef STOCON_DEFAULT_PRESET_DIR
#define STOCON_DEFAULT_PRESET_DIR "presets"
#endif

namespace {

using stocon::io::json;
namespace ex = stocon::experiment;

std::string resolve_preset(const std::string& name) {
  if (std::filesystem::is_regular_file(name)) return name;
  std::string dir = STOCON_DEFAULT_PRESET_DIR;
  if (const char* env = std::getenv("STOCON_PRESET_DIR")) dir = env;
  const auto p = std::filesystem::path(dir) / (name + ".json");
  stocon::require(std::filesystem::exists(p), stocon::ErrorKind::kConfig,
                  "no preset '" + name + "' in " + dir);
  return p.string();
}

// Parses "key=value"; value is read as JSON, falling back to a string.
std::pair<std::string, json> parse_assignment(const std::string& s) {
  const auto eq = s.find('=');
  stocon::require(eq != std::string::npos && eq > 0, stocon::ErrorKind::kConfig,
                  "expected key=value, got '" + s + "'");
  const std::string key = s.substr(0, eq);
  const std::string val = s.substr(eq + 1);
  json v = json::parse(val, nullptr, false);
  if (v.is_discarded()) v = val;
  return {key, v};
}

struct RunOptions {
  std::string config;
  std::string preset;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> paths;
  std::optional<double> dt;
  std::optional<double> tmax;
  std::optional<std::int64_t> stride;
  std::string out;
  std::optional<double> k_sigma;
  std::optional<double> t_from;
  std::string form;
  std::string mode;
  std::string cert_mode;
  std::optional<int> threads;
  std::map<std::string, double> named;  // --lambda etc.
  std::vector<std::string> sets;
};

json build_config(const RunOptions& o) {
  json cfg = json::object();
  if (!o.config.empty()) cfg = stocon::io::read_json_file(o.config);
  if (!o.preset.empty()) {
    stocon::require(o.config.empty(), stocon::ErrorKind::kConfig,
                    "--config and --preset are exclusive");
    cfg = stocon::io::read_json_file(resolve_preset(o.preset));
  }
  if (!o.model.empty()) {
    if (cfg.contains("model")) {
      const json& m = cfg["model"];
      const std::string have = m.is_string() ? m.get<std::string>()
                                             : m.value("name", std::string());
      stocon::require(have == o.model, stocon::ErrorKind::kConfig,
                      "--model " + o.model + " conflicts with config model " + have);
    } else {
      cfg["model"] = json{{"name", o.model}, {"params", json::object()}};
    }
  }
  stocon::require(cfg.contains("model"), stocon::ErrorKind::kConfig,
                  "no model given (use --model, --preset or --config)");
  if (cfg["model"].is_string())
    cfg["model"] = json{{"name", cfg["model"]}, {"params", json::object()}};
  if (!cfg["model"].contains("params")) cfg["model"]["params"] = json::object();
  json& params = cfg["model"]["params"];
  for (const auto& [k, v] : o.named) params[k] = v;
  for (const auto& s : o.sets) {
    auto [k, v] = parse_assignment(s);
    params[k] = v;
  }

  json& sim = cfg["sim"];
  if (!sim.is_object()) sim = json::object();
  if (o.seed) sim["seed"] = *o.seed;
  if (o.paths) sim["paths"] = *o.paths;
  if (o.dt) sim["dt"] = *o.dt;
  if (o.tmax) sim["t_max"] = *o.tmax;
  if (o.stride) sim["record_stride"] = *o.stride;

  if (o.k_sigma || o.t_from || !o.form.empty() || !o.mode.empty()) {
    if (!cfg.contains("checks") || cfg["checks"].empty())
      cfg["checks"] = json::array({json::object()});
    for (auto& c : cfg["checks"]) {
      if (o.k_sigma) c["k_sigma"] = *o.k_sigma;
      if (o.t_from) c["t_from"] = *o.t_from;
      if (!o.form.empty()) c["form"] = o.form;
      if (!o.mode.empty()) c["envelope_mode"] = o.mode;
    }
  }
  if (!o.cert_mode.empty()) {
    if (!cfg.contains("certificate")) cfg["certificate"] = json::object();
    cfg["certificate"]["mode"] = o.cert_mode;
  }
  if (!o.out.empty()) cfg["outputs"] = json{{"dir", o.out}};
  return cfg;
}

void add_common(CLI::App* sub, RunOptions& o) {
  sub->add_option("--config", o.config, "experiment config file (JSON)");
  sub->add_option("--preset", o.preset, "preset name or path");
  sub->add_option("--model", o.model, "ou | observer | composite | fn-pair | diffusive-net");
  sub->add_option("--set", o.sets, "model parameter override key=value")
      ->take_all();
  sub->add_option("--threads", o.threads, "worker threads (default $STOCON_THREADS or 1)");
  sub->add_option("--out", o.out, "output directory (run) or file (certify)");
}

// --lambda, --sigma, ... write straight into the model parameters.
void add_param_flags(CLI::App* sub, std::map<std::string, double>& named) {
  for (const char* name : {"lambda", "sigma", "a0", "b0", "alpha", "kappa", "k", "c"}) {
    sub->add_option_function<double>(
        std::string("--") + name, [&named, name](double v) { named[name] = v; },
        std::string("model parameter ") + name);
  }
}

int workers(const RunOptions& o) {
  return o.threads ? std::max(*o.threads, 1) : stocon::workers_from_env(1);
}

int cmd_run(const RunOptions& o) {
  ex::ExperimentConfig cfg = ex::parse_config(build_config(o));
  cfg.sim.workers = workers(o);
  std::string err;
  const int code = ex::run_experiment_status(cfg, err);
  if (!err.empty()) {
    std::cerr << "stocon: " << err << "\n";
  } else {
    const json report = stocon::io::read_json_file(
        (std::filesystem::path(cfg.out_dir) / "report.json").string());
    std::cout << cfg.model << ": " << (report.value("pass", false) ? "PASS" : "FAIL")
              << " (outputs in " << cfg.out_dir << ")\n";
  }
  return code;
}

int cmd_certify(const RunOptions& o) {
  ex::ExperimentConfig cfg = ex::parse_config(build_config(o));
  const auto model = ex::prepare_model(cfg);
  const auto est = stocon::analysis::estimate_certificate(
      model.certified, model.metric, model.domain, {}, workers(o));
  json out = ex::certificate_summary(est);
  if (est.certificate) out["certificate"] = stocon::io::to_json(*est.certificate);
  if (model.formula) out["formula"] = stocon::io::to_json(*model.formula);
  const std::string text = stocon::io::dump(out);
  if (o.out.empty())
    std::cout << text;
  else
    stocon::io::write_text(o.out, text);
  return est.rate.contracting ? ex::kExitPass : ex::kExitCheckFailed;
}

struct CombineOptions {
  std::string rule;
  std::vector<std::string> files;
  std::string out;
  double k = 1.0;
  double bound_k = 1.0;
  double l1 = 1.0, m1 = 1.0, l2 = 1.0, m2 = 1.0;
  std::optional<double> s12;
  std::optional<double> s21;
};

int cmd_combine(const CombineOptions& o) {
  ex::CombineRequest req;
  req.rule = o.rule;
  for (const auto& f : o.files)
    req.inputs.push_back(stocon::io::certificate_from_json(stocon::io::read_json_file(f)));
  req.k = o.k;
  req.bound_k = o.bound_k;
  req.weights = {o.l1, o.m1, o.l2, o.m2};
  req.coupling.j12_sup_sing = o.s12;
  req.coupling.j21_sup_sing = o.s21;
  const auto cert = ex::combine_cmd(req);
  const std::string text = stocon::io::dump(stocon::io::to_json(cert));
  if (o.out.empty())
    std::cout << text;
  else
    stocon::io::write_text(o.out, text);
  return ex::kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic contraction certificates and Monte-Carlo checks"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run an experiment and check its envelope");
  add_common(run_cmd, run);
  add_param_flags(run_cmd, run.named);
  run_cmd->add_option("--seed", run.seed, "master seed");
  run_cmd->add_option("--paths", run.paths, "ensemble size");
  run_cmd->add_option("--dt", run.dt, "time step");
  run_cmd->add_option("--tmax", run.tmax, "horizon");
  run_cmd->add_option("--stride", run.stride, "record every n-th step");
  run_cmd->add_option("--k-sigma", run.k_sigma, "standard-error slack per check");
  run_cmd->add_option("--t-from", run.t_from, "first checked time");
  run_cmd->add_option("--form", run.form, "expectation | sharp");
  run_cmd->add_option("--mode", run.mode, "pair-noisy | noise-free-vs-noisy");
  run_cmd->add_option("--certificate", run.cert_mode, "estimate | formula");

  RunOptions cert;
  auto* cert_cmd = app.add_subcommand("certify", "estimate a certificate for a model");
  add_common(cert_cmd, cert);
  add_param_flags(cert_cmd, cert.named);

  CombineOptions comb;
  auto* comb_cmd = app.add_subcommand("combine", "combine two certificate files");
  comb_cmd->add_option("--rule", comb.rule, "parallel | feedback | hierarchical | small-gain")
      ->required();
  comb_cmd->add_option("files", comb.files, "two certificate JSON files")->expected(2)
      ->required();
  comb_cmd->add_option("--out", comb.out, "output file (default stdout)");
  comb_cmd->add_option("--k", comb.k, "feedback scaling k");
  comb_cmd->add_option("--K", comb.bound_k, "hierarchy coupling bound K");
  comb_cmd->add_option("--l1", comb.l1);
  comb_cmd->add_option("--m1", comb.m1);
  comb_cmd->add_option("--l2", comb.l2);
  comb_cmd->add_option("--m2", comb.m2);
  comb_cmd->add_option("--s12", comb.s12, "sup singular value of Theta1 J12 Theta2^-1");
  comb_cmd->add_option("--s21", comb.s21, "sup singular value of Theta2 J21 Theta1^-1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ex::kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*cert_cmd) return cmd_certify(cert);
    if (*comb_cmd) return cmd_combine(comb);
  } catch (const stocon::NonFiniteError& e) {
    std::cerr << "stocon: " << e.what() << "\n";
    return ex::kExitNonFinite;
  } catch (const stocon::Error& e) {
    std::cerr << "stocon: " << e.what() << "\n";
    return ex::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "stocon: " << e.what() << "\n";
    return ex::kExitConfig;
  }
  return ex::kExitConfig;
}
