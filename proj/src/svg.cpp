#include "phenotyper/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "phenotyper/csv.hpp"
#include "phenotyper/errors.hpp"

namespace phenotyper {

namespace {

const char* kPalette[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756",
                          "#72b7b2", "#b279a2", "#9d755d", "#bab0ac"};
constexpr int kPaletteSize = 8;

std::string color_of(int cls) { return kPalette[((cls % kPaletteSize) + kPaletteSize) % kPaletteSize]; }

void marker(std::ostringstream& out, double x, double y, int cls, const std::string& color) {
  switch (cls % 3) {
    case 1:  // diamond
      out << "<path d='M" << format_double(x) << " " << format_double(y - 4.5) << " L"
          << format_double(x + 4.5) << " " << format_double(y) << " L" << format_double(x) << " "
          << format_double(y + 4.5) << " L" << format_double(x - 4.5) << " " << format_double(y)
          << " Z' fill='" << color << "' fill-opacity='0.75'/>";
      break;
    case 2:  // square
      out << "<rect x='" << format_double(x - 3.4) << "' y='" << format_double(y - 3.4)
          << "' width='6.8' height='6.8' fill='" << color << "' fill-opacity='0.75'/>";
      break;
    default:
      out << "<circle cx='" << format_double(x) << "' cy='" << format_double(y)
          << "' r='3.6' fill='" << color << "' fill-opacity='0.75'/>";
  }
  out << "\n";
}

void save(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << body;
}

}  // namespace

void write_scatter_svg(const std::filesystem::path& path, const std::vector<ScatterPoint>& points,
                       const std::string& title, const std::vector<std::string>& color_labels,
                       const std::vector<std::string>& marker_labels) {
  const double W = 760, H = 560, pad = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!points.empty()) {
    xmin = xmax = points[0].x;
    ymin = ymax = points[0].y;
    for (const auto& p : points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;
  const auto sx = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (W - 2 * pad); };
  const auto sy = [&](double y) { return H - pad - (y - ymin) / (ymax - ymin) * (H - 2 * pad); };

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-family='sans-serif' "
         "font-size='15'>"
      << title << "</text>\n";
  for (const auto& p : points) marker(out, sx(p.x), sy(p.y), p.marker_class, color_of(p.color_class));

  double ly = 44;
  for (std::size_t i = 0; i < color_labels.size(); ++i) {
    out << "<circle cx='" << W - 150 << "' cy='" << ly << "' r='5' fill='"
        << color_of(static_cast<int>(i)) << "'/>"
        << "<text x='" << W - 140 << "' y='" << ly + 4
        << "' font-family='sans-serif' font-size='12'>" << color_labels[i] << "</text>\n";
    ly += 18;
  }
  for (std::size_t i = 0; i < marker_labels.size(); ++i) {
    marker(out, W - 150, ly, static_cast<int>(i), "#555555");
    out << "<text x='" << W - 140 << "' y='" << ly + 4
        << "' font-family='sans-serif' font-size='12'>" << marker_labels[i] << "</text>\n";
    ly += 18;
  }
  out << "</svg>\n";
  save(path, out.str());
}

void write_bar_svg(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, double>>& bars,
                   const std::string& title) {
  const double W = 760, row_h = 22, pad = 46, label_w = 200;
  const double H = pad * 2 + row_h * static_cast<double>(bars.size());
  double vmax = 1e-12;
  for (const auto& [_, v] : bars) vmax = std::max(vmax, std::abs(v));

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-family='sans-serif' "
         "font-size='15'>"
      << title << "</text>\n";
  double y = pad;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double w = std::abs(bars[i].second) / vmax * (W - label_w - pad - 20);
    out << "<text x='" << label_w - 8 << "' y='" << y + row_h * 0.7
        << "' text-anchor='end' font-family='sans-serif' font-size='12'>" << bars[i].first
        << "</text>\n";
    out << "<rect x='" << label_w << "' y='" << y + 3 << "' width='" << format_double(w)
        << "' height='" << row_h - 8 << "' fill='" << color_of(static_cast<int>(i / 4)) << "'/>\n";
    out << "<text x='" << label_w + w + 6 << "' y='" << y + row_h * 0.7
        << "' font-family='sans-serif' font-size='11'>" << format_double(bars[i].second)
        << "</text>\n";
    y += row_h;
  }
  out << "</svg>\n";
  save(path, out.str());
}

}  // namespace phenotyper
