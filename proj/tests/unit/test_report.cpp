#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmseg/report.hpp"
#include "json.hpp"

using namespace gmseg;

namespace {

MetricReport sample_report() {
  MetricReport r;
  MetricRow a;
  a.subject = "site1-sc01";
  a.rater = 0;
  a[Metric::DSC] = 0.8;
  a[Metric::HSD] = 1.25;
  a.slices_evaluated = 3;
  MetricRow b = a;
  b.rater = 2;
  b[Metric::DSC] = 0.6;
  b[Metric::HSD] = std::nullopt;
  b.distance_skips = 1;
  r.rows = {a, b};
  compute_aggregates(r);
  return r;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

TEST_CASE("csv layout") {
  const auto lines = split(report_to_csv(sample_report()), '\n');
  REQUIRE(lines.size() >= 5);
  const auto header = split(lines[0], ',');
  REQUIRE(header.size() == 2 + kMetricCount + 2);
  CHECK(header[0] == "subject");
  CHECK(header[1] == "rater");
  for (std::size_t i = 0; i < kMetricCount; ++i) CHECK(header[2 + i] == metric_names()[i]);
  CHECK(header[2 + kMetricCount] == "slices");

  const auto row1 = split(lines[1], ',');
  REQUIRE(row1.size() == header.size());
  CHECK(row1[0] == "site1-sc01");
  CHECK(row1[1] == "0");
  CHECK(std::stod(row1[2]) == 0.8);
  CHECK(row1[3].empty());  // MSD missing
  const auto row2 = split(lines[2], ',');
  CHECK(row2[1] == "2");
  CHECK(row2[4].empty());  // HSD missing in the second row
  CHECK(row2.back() == "1");

  const auto mean = split(lines[3], ',');
  CHECK(mean[0] == "mean");
  CHECK(std::stod(mean[2]) == doctest::Approx(0.7));
  const auto sd = split(lines[4], ',');
  CHECK(sd[0] == "std");
  CHECK(std::stod(sd[2]) == doctest::Approx(0.1));
}

TEST_CASE("json layout") {
  const auto j = nlohmann::json::parse(report_to_json(sample_report()));
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][0]["subject"] == "site1-sc01");
  CHECK(j["rows"][0]["metrics"]["DSC"].get<double>() == 0.8);
  CHECK(j["rows"][0]["metrics"]["MSD"].is_null());
  CHECK(j["rows"][1]["metrics"]["HSD"].is_null());
  CHECK(j["aggregate"]["DSC"]["mean"].get<double>() == doctest::Approx(0.7));
  CHECK(j["aggregate"]["HSD"]["count"] == 1);
  CHECK(j["aggregate"]["HSD"]["missing"] == 1);
  CHECK(j["notes"].is_array());
  CHECK_FALSE(j["notes"].empty());
}

TEST_CASE("write_report picks the format from the extension") {
  const auto dir = std::filesystem::temp_directory_path() / "gmseg_report_test";
  std::filesystem::create_directories(dir);
  const auto r = sample_report();
  write_report(dir / "r.json", r);
  write_report(dir / "r.csv", r);
  std::ifstream j(dir / "r.json"), c(dir / "r.csv");
  std::stringstream js, cs;
  js << j.rdbuf();
  cs << c.rdbuf();
  CHECK(js.str() == report_to_json(r));
  CHECK(cs.str() == report_to_csv(r));
  std::filesystem::remove_all(dir);
}

TEST_CASE("values round-trip through text exactly") {
  MetricReport r;
  MetricRow row;
  row.subject = "s";
  row[Metric::MSD] = 0.1 + 0.2;
  r.rows = {row};
  compute_aggregates(r);
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["rows"][0]["metrics"]["MSD"].get<double>() == 0.1 + 0.2);
  const auto lines = split(report_to_csv(r), '\n');
  CHECK(std::stod(split(lines[1], ',')[3]) == 0.1 + 0.2);
}
