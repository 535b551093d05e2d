#pragma once

// JSON/CSV serialization. CSV numbers use 17 significant digits and JSON uses
// shortest round-trip output, so both are exact and byte-stable across runs.

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stocon/analysis.hpp"
#include "stocon/core.hpp"
#include "stocon/errors.hpp"
#include "stocon/sim.hpp"

namespace stocon::io {

using json = nlohmann::ordered_json;

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Vec vec_from_json(const json& j) {
  require(j.is_array(), ErrorKind::kConfig, "expected a number array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Mat mat_from_json(const json& j) {
  require(j.is_array() && !j.empty() && j[0].is_array(), ErrorKind::kConfig,
          "expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols,
            ErrorKind::kConfig, "ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline json to_json(const DomainBox& d) {
  return json{{"lower", to_json(d.lower())},
              {"upper", to_json(d.upper())},
              {"t_max", d.t_max()},
              {"samples", d.sample_count()}};
}

inline DomainBox domain_from_json(const json& j) {
  return DomainBox(vec_from_json(j.at("lower")), vec_from_json(j.at("upper")),
                   j.at("t_max").get<double>(),
                   j.value("samples", std::int64_t{1024}));
}

inline json to_json(const Metric& m) {
  json j{{"kind", to_string(m.kind())}, {"n", m.n()}, {"beta", m.beta()}};
  if (m.is_constant()) j["matrix"] = to_json(m.constant_matrix());
  return j;
}

inline Metric metric_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "Identity") return make_identity_metric(j.at("n").get<int>());
  if (kind == "ConstantMatrix") return make_constant_metric(mat_from_json(j.at("matrix")));
  throw Error(ErrorKind::kConfig,
              "metric kind '" + kind + "' cannot be loaded from a file");
}

inline json to_json(const ProvenanceNode& node) {
  json j{{"kind", to_string(node.kind)}, {"lambda", node.lambda}, {"C", node.c}};
  if (!node.rule.empty()) j["rule"] = node.rule;
  if (!node.params.empty()) {
    json p = json::object();
    for (const auto& [k, v] : node.params) p[k] = v;
    j["params"] = std::move(p);
  }
  if (!node.note.empty()) j["note"] = node.note;
  if (!node.inputs.empty()) {
    json in = json::array();
    for (const auto& child : node.inputs) in.push_back(to_json(*child));
    j["inputs"] = std::move(in);
  }
  return j;
}

inline std::shared_ptr<const ProvenanceNode> provenance_from_json(const json& j) {
  auto node = std::make_shared<ProvenanceNode>();
  const std::string kind = j.value("kind", std::string("Declared"));
  node->kind = kind == "Estimated"  ? Provenance::kEstimated
               : kind == "Combined" ? Provenance::kCombined
                                    : Provenance::kDeclared;
  node->lambda = j.value("lambda", 0.0);
  node->c = j.value("C", 0.0);
  node->rule = j.value("rule", std::string());
  node->note = j.value("note", std::string());
  if (j.contains("params"))
    for (const auto& [k, v] : j.at("params").items())
      node->params.emplace_back(k, v.get<double>());
  if (j.contains("inputs"))
    for (const auto& child : j.at("inputs"))
      node->inputs.push_back(provenance_from_json(child));
  return node;
}

inline json to_json(const ContractionCertificate& c) {
  return json{{"lambda", c.rate_lambda()},
              {"C", c.bound_c()},
              {"metric", to_json(c.metric())},
              {"domain", to_json(c.domain())},
              {"provenance", to_string(c.provenance())},
              {"provenance_tree", to_json(*c.provenance_tree())}};
}

/// Loads a certificate file. A missing metric means identity of dimension
/// "n"; a missing domain becomes the unit box.
inline ContractionCertificate certificate_from_json(const json& j) {
  try {
    const double lambda = j.at("lambda").get<double>();
    const double c = j.at("C").get<double>();
    Metric metric;
    if (j.contains("metric")) {
      metric = metric_from_json(j.at("metric"));
    } else {
      require(j.contains("n"), ErrorKind::kConfig,
              "certificate needs a metric or a dimension n");
      metric = make_identity_metric(j.at("n").get<int>());
    }
    DomainBox dom = j.contains("domain")
                        ? domain_from_json(j.at("domain"))
                        : DomainBox::uniform(metric.n(), -1.0, 1.0, 1.0, 1);
    const std::string prov = j.value("provenance", std::string("Declared"));
    const Provenance p = prov == "Estimated"  ? Provenance::kEstimated
                         : prov == "Combined" ? Provenance::kCombined
                                              : Provenance::kDeclared;
    std::shared_ptr<const ProvenanceNode> tree;
    if (j.contains("provenance_tree"))
      tree = provenance_from_json(j.at("provenance_tree"));
    return ContractionCertificate(lambda, c, std::move(metric), std::move(dom),
                                  p, std::move(tree));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad certificate: ") + e.what());
  }
}

inline json to_json(const analysis::VerificationReport& r) {
  json j{{"pass", r.pass},
         {"worst_margin", r.worst_margin},
         {"worst_time", r.worst_time},
         {"k_sigma", r.k_sigma},
         {"n_points", r.n_points}};
  return j;
}

// Non-finite numbers come out as null.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::kConfig, "cannot write " + path);
  f << text;
  require(static_cast<bool>(f), ErrorKind::kConfig, "write failed: " + path);
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kConfig, "cannot open " + path);
  try {
    return json::parse(f, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, path + ": " + e.what());
  }
}

inline std::string stats_csv(const sim::EnsemblePairStats& s) {
  std::string out = "t,msd,stderr\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out += fmt_double(s.times[i]) + "," + fmt_double(s.mean_sq_dist[i]) + "," +
           fmt_double(s.std_err[i]) + "\n";
  return out;
}

inline std::string envelope_csv(const std::vector<double>& times,
                                const analysis::BoundEnvelope& env) {
  std::string out = "t,bound\n";
  for (double t : times) out += fmt_double(t) + "," + fmt_double(env(t)) + "\n";
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable out;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      out.header = std::move(cells);
      first = false;
    } else {
      std::vector<double> row;
      row.reserve(cells.size());
      for (const auto& c : cells) row.push_back(std::stod(c));
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace stocon::io
