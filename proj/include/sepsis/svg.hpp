#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sepsis {

// Minimal SVG 1.1 document builder; enough for line charts and summary
// plots, emitting well-formed XML with escaped text.
class SvgDocument {
 public:
  SvgDocument(double width, double height);

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width = 1.0);
  void polyline(const std::vector<std::pair<double, double>>& points, const std::string& stroke,
                double stroke_width = 1.5);
  void circle(double cx, double cy, double r, const std::string& fill);
  void rect(double x, double y, double w, double h, const std::string& fill);
  void text(double x, double y, const std::string& content, double font_size = 12.0,
            const std::string& anchor = "start", const std::string& fill = "#222222");

  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  double width_;
  double height_;
  std::vector<std::string> elements_;
};

std::string xml_escape(const std::string& s);

// Color helpers for chart series and value-gradient points.
std::string series_color(std::size_t index);
std::string diverging_color(double t);  // t in [0,1]: blue -> red

}  // namespace sepsis
