// End-to-end acceptance run. One PASS/FAIL line per criterion; exits nonzero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "combine_fixtures.hpp"
#include "oracles.hpp"
#include "stocon/stocon.hpp"

namespace fs = std::filesystem;
using namespace stocon;

namespace {

const std::vector<std::string> kPresets = {"ou-optimality", "paper-fig1", "paper-fig2",
                                           "observer-scalar"};

std::string preset_dir() {
  if (const char* env = std::getenv("STOCON_PRESET_DIR")) return env;
  return "presets";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

struct Run {
  experiment::ExperimentResult result;
  double seconds = 0.0;
  std::map<std::string, std::string> files;
};

// Preset runs are shared: the workers=1 run feeds criteria 1-3, all three
// feed the determinism check.
std::map<std::string, std::map<int, Run>> g_runs;

const Run& preset_run(const std::string& name, int workers) {
  auto& slot = g_runs[name];
  if (auto it = slot.find(workers); it != slot.end()) return it->second;
  auto cfg = experiment::parse_config(
      io::read_json_file((fs::path(preset_dir()) / (name + ".json")).string()));
  cfg.sim.workers = workers;
  const fs::path out = fs::temp_directory_path() / "stocon_acceptance" / name /
                       ("w" + std::to_string(workers));
  fs::remove_all(out);
  cfg.out_dir = out.string();
  Run r;
  const auto t0 = std::chrono::steady_clock::now();
  r.result = experiment::run_experiment(cfg);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.files = dir_contents(out);
  return slot.emplace(workers, std::move(r)).first->second;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome ou_optimality() {
  const Run& run = preset_run("ou-optimality", 1);
  const auto& s = run.result.stats.front();
  const auto& env = run.result.envelopes.front();
  double worst_exact = 0.0, worst_env = 0.0;
  bool ok = true;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double exact = analysis::ou_exact_msd(2.0, 0.0, 1.0, 1.0, s.times[i]);
    const double tol = 3.0 * s.std_err[i];
    const double d_exact = std::abs(s.mean_sq_dist[i] - exact);
    const double d_env = std::abs(s.mean_sq_dist[i] - env(s.times[i]));
    ok = ok && d_exact <= tol && d_env <= tol;
    if (s.std_err[i] > 0) {
      worst_exact = std::max(worst_exact, d_exact / s.std_err[i]);
      worst_env = std::max(worst_env, d_env / s.std_err[i]);
    }
  }
  ok = ok && s.size() > 1 && run.seconds < 30.0;
  return {ok, fmt("max |msd-exact| %.2f SE, max |msd-sharp| %.2f SE, %.1f s", worst_exact,
                  worst_env, run.seconds)};
}

Outcome composite_bound() {
  const Run& run = preset_run("paper-fig1", 1);
  const auto& s = run.result.stats.front();
  const auto& env = run.result.envelopes.front();
  const double alpha = 1.0;
  const double t_from = 5.0 * (2.0 / alpha);
  bool ok = std::abs(env.asymptote() - 200.0) < 1e-9;
  double worst = -1e300;
  int n = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.times[i] < t_from) continue;
    const double margin = s.mean_sq_dist[i] - (env(s.times[i]) + 3.0 * s.std_err[i]);
    worst = std::max(worst, margin);
    ok = ok && margin <= 0.0;
    ++n;
  }
  ok = ok && n > 0 && run.seconds < 60.0;
  return {ok, fmt("asymptote %.6g, worst msd-(bound+3SE) %.3g, %.1f s", env.asymptote(),
                  worst, run.seconds)};
}

Outcome fn_sync() {
  const Run& run = preset_run("paper-fig2", 1);
  const auto& r = run.result.report.at("sync_abs");
  const double bound = 12.25;
  const double worst = r.at("max_mean").get<double>();
  const double mean = r.at("post_transient_mean").get<double>();
  const bool ok = r.at("n_points").get<int>() > 0 && worst <= bound && mean <= bound &&
                  run.seconds < 300.0;
  return {ok, fmt("max post-transient E|v1-v2| %.4g (avg %.4g) vs 12.25, %.1f s", worst, mean,
                  run.seconds)};
}

Outcome generator_inequality() {
  int violations = 0;
  int checked = 0;
  std::string models;
  std::mt19937_64 g(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& name : experiment::model_names()) {
    const auto cfg = experiment::parse_config(experiment::json{{"model", name}});
    const auto pm = experiment::prepare_model(cfg);
    std::optional<ContractionCertificate> cert = pm.formula;
    if (!cert) cert = analysis::estimate_certificate(pm.certified, pm.metric, pm.domain).certificate;
    if (!cert) continue;
    const DomainBox& dom = pm.domain;
    const int n = dom.n();
    for (int i = 0; i < 10000; ++i) {
      Vec a(n), b(n);
      for (int d = 0; d < n; ++d) {
        const double lo = dom.lower()(d), hi = dom.upper()(d);
        a(d) = lo + (hi - lo) * u(g);
        b(d) = lo + (hi - lo) * u(g);
      }
      const double t = dom.t_max() * u(g);
      const double v = pm.metric.weighted_sq_norm(a - b, t);
      const double gen = analysis::generator_value(pm.certified, pm.metric, a, b, t);
      const double rhs = -2.0 * cert->rate_lambda() * v + 2.0 * cert->bound_c() +
                         1e-7 * (1.0 + std::abs(v));
      if (!(gen <= rhs)) ++violations;
      ++checked;
    }
    models += (models.empty() ? "" : ",") + name;
  }
  const bool ok = violations == 0 && checked == 10000 * 5;
  return {ok, std::to_string(checked) + " samples over " + models + ", " +
                  std::to_string(violations) + " violations"};
}

Outcome combination_conservativeness() {
  using fixtures::Trial;
  struct Rule {
    const char* name;
    Trial (*make)(std::mt19937_64&);
  };
  const Rule rules[] = {{"feedback", fixtures::feedback_trial},
                        {"hierarchical", fixtures::hierarchical_trial},
                        {"small-gain", fixtures::small_gain_trial}};
  int bad = 0, block_checked = 0, block_bad = 0;
  std::uint64_t seed = 500;
  for (const auto& rule : rules) {
    std::mt19937_64 g(seed++);
    for (int trial = 0; trial < 1000; ++trial) {
      const Trial t = rule.make(g);
      if (!t.combined) {
        ++bad;
        continue;
      }
      const auto m = fixtures::measure(t);
      if (!(m.rate_claimed <= m.rate_measured + 1e-8)) ++bad;
      if (!(m.c_claimed >= m.c_measured - 1e-8)) ++bad;

      // Negated symmetric generalized Jacobian in the block-diagonal metric.
      const int n1 = t.b1.n(), n2 = t.b2.n();
      const Mat th = matalg::block_diag(t.b1.theta, t.b2.theta);
      Mat jac(n1 + n2, n1 + n2);
      jac << t.b1.jac, t.j12, t.j21, t.b2.jac;
      const Mat f = th * jac * th.inverse();
      const Mat a = -0.5 * (f + f.transpose());
      const auto bb = matalg::block_min_eig_lower_bound(
          a.topLeftCorner(n1, n1), a.bottomRightCorner(n2, n2), a.bottomLeftCorner(n2, n1));
      if (bb.applicable) {
        ++block_checked;
        if (!(bb.bound <= oracle::lambda_min(a) + 1e-10)) ++block_bad;
      }
    }
  }
  return {bad == 0 && block_bad == 0,
          "3000 trials, " + std::to_string(bad) + " non-conservative; block bound " +
              std::to_string(block_bad) + "/" + std::to_string(block_checked) + " violations"};
}

Outcome gronwall() {
  int bad = 0;
  double worst_gap = 0.0, worst_eq = 0.0;
  const int kTimes = 1000;
  const double t_end = 10.0;
  const int substeps = 10;
  const double h = t_end / kTimes / substeps;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 5; ++k) {
        const double g0 = 10.0 * i / 4.0;
        const double lambda = 0.1 + 4.9 * j / 4.0;
        const double c = 5.0 * k / 4.0;
        const auto rhs = [&](double y) { return -lambda * y + c; };
        double g = g0;
        for (int s = 1; s <= kTimes; ++s) {
          for (int q = 0; q < substeps; ++q) {
            const double k1 = rhs(g), k2 = rhs(g + 0.5 * h * k1);
            const double k3 = rhs(g + 0.5 * h * k2), k4 = rhs(g + h * k3);
            g += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
          }
          const double t = t_end * s / kTimes;
          const double env = analysis::gronwall_envelope(g0, lambda, c, t);
          worst_gap = std::max(worst_gap, g - env);
          if (!(g <= env + 1e-9)) ++bad;
          if (g0 >= c / lambda) {
            worst_eq = std::max(worst_eq, std::abs(g - env));
            if (!(std::abs(g - env) <= 1e-6)) ++bad;
          }
        }
      }
  return {bad == 0, fmt("125 cases x 1000 times, max g-env %.3g, max |g-env| on equality set %.3g",
                        worst_gap, worst_eq)};
}

Outcome determinism() {
  bool ok = true;
  std::string detail;
  for (const auto& name : kPresets) {
    const auto& ref = preset_run(name, 1).files;
    bool same = !ref.empty();
    for (int w : {2, 8}) same = same && preset_run(name, w).files == ref;
    ok = ok && same;
    detail += name + (same ? " ok " : " DIFFERS ");
  }
  return {ok, detail + "(workers 1/2/8)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"ou-optimality", ou_optimality},
      {"composite-bound", composite_bound},
      {"fn-synchronization", fn_sync},
      {"generator-inequality", generator_inequality},
      {"combination-conservativeness", combination_conservativeness},
      {"gronwall-envelope", gronwall},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
