#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "otfit/dataset.hpp"

namespace otfit {

/// Generated and target points written side by side: a `set` column
/// ("generated" or "target") followed by the coordinates.
struct SampleDump {
  PointSet generated;
  PointSet targets;
};

void write_sample_dump(const std::filesystem::path& path, const SampleDump& dump);
SampleDump read_sample_dump(const std::filesystem::path& path);

struct AxisRange {
  double min = -1.5;
  double max = 1.5;
};

/// Scatter of 2D points (targets first, then generated) on fixed axes.
/// Output bytes depend only on the input.
std::string scatter_svg(const SampleDump& dump, AxisRange x = {}, AxisRange y = {});

/// Line plot of one or more named series over a shared x.
struct Series {
  std::string name;
  std::vector<double> values;
};
std::string line_svg(const std::vector<double>& x, const std::vector<Series>& series, const std::string& x_label);

struct ExportResult {
  std::filesystem::path csv;
  std::optional<std::filesystem::path> svg;
  std::string notice;  ///< non-empty when the SVG was skipped
};

/// Metrics log -> <out>/<stem>.csv and a cost/eps line plot.
ExportResult export_metrics(const std::filesystem::path& log, const std::filesystem::path& out_dir);

/// Sample dump -> <out>/<stem>.csv and, for 2D points, a scatter SVG.
ExportResult export_samples(const std::filesystem::path& dump, const std::filesystem::path& out_dir,
                            AxisRange x = {}, AxisRange y = {});

}  // namespace otfit
