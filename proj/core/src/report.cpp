#include "gmseg/report.hpp"

#include <charconv>
#include <fstream>

#include "gmseg/errors.hpp"
#include "json.hpp"

namespace gmseg {

namespace {

std::string fmt_value(const MaybeValue& v) {
  if (!v) return "";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_to_csv(const MetricReport& report) {
  std::string out = "subject,rater";
  for (auto name : metric_names()) {
    out += ',';
    out += name;
  }
  out += ",slices,distance_skips\n";
  for (const auto& row : report.rows) {
    out += csv_field(row.subject) + "," + std::to_string(row.rater);
    for (const auto& v : row.values) out += "," + fmt_value(v);
    out += "," + std::to_string(row.slices_evaluated) + "," + std::to_string(row.distance_skips) + "\n";
  }
  for (const char* which : {"mean", "std"}) {
    out += std::string(which) + ",";
    for (const auto& a : report.aggregates) {
      MaybeValue v;
      if (a) v = which[0] == 'm' ? a->mean : a->std;
      out += "," + fmt_value(v);
    }
    out += ",,\n";
  }
  return out;
}

std::string report_to_json(const MetricReport& report) {
  using nlohmann::ordered_json;
  const auto& names = metric_names();
  ordered_json doc;
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json r;
    r["subject"] = row.subject;
    r["rater"] = row.rater;
    ordered_json metrics;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      metrics[std::string(names[m])] = row.values[m] ? ordered_json(*row.values[m]) : ordered_json(nullptr);
    }
    r["metrics"] = metrics;
    r["slices"] = row.slices_evaluated;
    r["distance_skips"] = row.distance_skips;
    rows.push_back(r);
  }
  doc["rows"] = rows;
  ordered_json agg;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    const auto& a = report.aggregates[m];
    if (!a) {
      agg[std::string(names[m])] = nullptr;
      continue;
    }
    agg[std::string(names[m])] = {{"mean", a->mean}, {"std", a->std}, {"count", a->count}, {"missing", a->missing}};
  }
  doc["aggregate"] = agg;
  doc["notes"] = report.notes;
  return doc.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const MetricReport& report) {
  const bool json = path.extension() == ".json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << (json ? report_to_json(report) : report_to_csv(report));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace gmseg
