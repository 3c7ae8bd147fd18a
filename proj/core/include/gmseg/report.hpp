#pragma once

#include <filesystem>
#include <string>

#include "gmseg/metrics.hpp"

namespace gmseg {

/// One header line, one line per (subject, rater), then `mean` and `std`
/// rows. Columns: subject, rater, the 17 metrics in metric_names() order,
/// slices, distance_skips. Missing values are empty cells.
std::string report_to_csv(const MetricReport& report);

/// {"rows": [{subject, rater, metrics: {...}, slices, distance_skips}],
///  "aggregate": {metric: {mean, std, count, missing}}, "notes": [...]}.
/// Missing values are null.
std::string report_to_json(const MetricReport& report);

/// Picks CSV or JSON from the extension (.json means JSON).
void write_report(const std::filesystem::path& path, const MetricReport& report);

}  // namespace gmseg
