#include "stocon/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "stocon/combine.hpp"

namespace stocon::io {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stocon_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TEST(FmtDouble, RoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 19.8, 6.02214076e23}) {
    EXPECT_EQ(std::stod(fmt_double(v)), v) << fmt_double(v);
  }
  EXPECT_EQ(fmt_double(2.0), "2");
}

TEST(Csv, StatsFormatAndParse) {
  sim::EnsemblePairStats s;
  s.times = {0.0, 0.1, 0.2};
  s.mean_sq_dist = {4.0, 1.0 / 3.0, 2.5};
  s.std_err = {0.0, 0.01, 0.02};
  const std::string text = stats_csv(s);
  EXPECT_EQ(text.substr(0, 13), "t,msd,stderr\n");
  EXPECT_EQ(text.substr(13, 6), "0,4,0\n");
  const auto table = parse_csv(text);
  ASSERT_EQ(table.header, (std::vector<std::string>{"t", "msd", "stderr"}));
  ASSERT_EQ(table.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(table.rows[i][0], s.times[i]);
    EXPECT_EQ(table.rows[i][1], s.mean_sq_dist[i]);
    EXPECT_EQ(table.rows[i][2], s.std_err[i]);
  }
}

TEST(Csv, EnvelopeMatchesFunction) {
  const analysis::BoundEnvelope env{1.0, 2.0, 3.0, 1.0};
  const std::vector<double> times = {0.0, 0.5, 1.7};
  const auto table = parse_csv(envelope_csv(times, env));
  ASSERT_EQ(table.header, (std::vector<std::string>{"t", "bound"}));
  for (std::size_t i = 0; i < times.size(); ++i) EXPECT_EQ(table.rows[i][1], env(times[i]));
}

TEST(Json, CertificateRoundTripIsByteIdentical) {
  Mat m(2, 2);
  m << 2, 0.5, 0.5, 1;
  const ContractionCertificate c1(0.7, 0.2, make_constant_metric(m),
                                  DomainBox::uniform(2, -3, 3, 10, 128),
                                  Provenance::kEstimated);
  const ContractionCertificate c2(1.1, 0.3, make_identity_metric(1),
                                  DomainBox::uniform(1, -1, 1, 10, 16), Provenance::kDeclared);
  const auto fb = combine::combine_feedback(c1, c2, 0.25);
  const std::string text = dump(to_json(fb));
  const auto back = certificate_from_json(json::parse(text));
  EXPECT_EQ(dump(to_json(back)), text);
  EXPECT_EQ(back.provenance(), Provenance::kCombined);
  EXPECT_EQ(back.provenance_tree()->inputs.size(), 2u);
  EXPECT_EQ(back.metric().constant_matrix(), fb.metric().constant_matrix());
}

TEST(Json, MinimalCertificateDefaults) {
  const auto c = certificate_from_json(json::parse(R"({"lambda": 2, "C": 0.5, "n": 3})"));
  EXPECT_EQ(c.n(), 3);
  EXPECT_EQ(c.metric().kind(), MetricKind::kIdentity);
  EXPECT_EQ(c.provenance(), Provenance::kDeclared);
}

TEST(Json, BadInputsAreConfigErrors) {
  for (const char* text : {R"({"C": 1, "n": 1})", R"({"lambda": 1, "C": 1})",
                           R"({"lambda": "x", "C": 1, "n": 1})",
                           R"({"lambda": 1, "C": 1, "metric": {"kind": "TimeVarying", "n": 1}})"}) {
    try {
      certificate_from_json(json::parse(text));
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfig) << text;
    }
  }
}

TEST(Json, NonFiniteDumpsAsNull) {
  analysis::VerificationReport r;  // worst_margin starts at +inf
  EXPECT_NE(dump(to_json(r)).find("\"worst_margin\": null"), std::string::npos);
}

TEST(Files, ReadAcceptsCommentsAndReportsMissing) {
  const auto dir = scratch("read");
  write_text((dir / "a.json").string(), "// preset\n{\"x\": 1 /* one */}\n");
  EXPECT_EQ(read_json_file((dir / "a.json").string()).at("x"), 1);
  try {
    read_json_file((dir / "missing.json").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  write_text((dir / "bad.json").string(), "{oops");
  EXPECT_THROW(read_json_file((dir / "bad.json").string()), Error);
  EXPECT_THROW(write_text((dir / "no" / "such" / "dir.txt").string(), "x"), Error);
  EXPECT_EQ(slurp(dir / "a.json"), "// preset\n{\"x\": 1 /* one */}\n");
}

}  // namespace
}  // namespace stocon::io
