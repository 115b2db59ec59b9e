#pragma once

// Minimal self-contained SVG line charts for reports.

#include <string>
#include <vector>

namespace rollcast {

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
  bool markers = false;
};

struct LinePanel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<LineSeries> series;
};

/// One chart per panel arranged in a grid of `columns` columns.
std::string render_line_panels(const std::string& title, const std::vector<LinePanel>& panels,
                               std::size_t columns = 1);

std::string xml_escape(const std::string& text);

}  // namespace rollcast
