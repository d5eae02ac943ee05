#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace phenotyper {

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  int color_class = 0;   // palette index
  int marker_class = 0;  // 0 circle, 1 diamond, 2 square
};

// Embedding scatter: color by cluster (or group), marker by visit.
void write_scatter_svg(const std::filesystem::path& path, const std::vector<ScatterPoint>& points,
                       const std::string& title, const std::vector<std::string>& color_labels,
                       const std::vector<std::string>& marker_labels);

// Horizontal bar chart for importance / divergence reports.
void write_bar_svg(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, double>>& bars,
                   const std::string& title);

}  // namespace phenotyper
