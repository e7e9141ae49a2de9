#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace jointssl::plots {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // drawn in the given order
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::optional<std::pair<double, double>> y_range;  // auto when empty
};

/// Static SVG line chart with markers and a legend.
std::string line_chart(const Axes& axes, const std::vector<Series>& series);

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series
};

/// Grouped bar chart; `series_names` label the bars inside each group.
std::string bar_chart(const Axes& axes, const std::vector<std::string>& series_names,
                      const std::vector<BarGroup>& groups);

/// Writes text to a file atomically (temporary file, then rename). Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace jointssl::plots
