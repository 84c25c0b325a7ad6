#include "sepsis/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sepsis/errors.hpp"

namespace sepsis {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

SvgDocument::SvgDocument(double width, double height) : width_(width), height_(height) {}

void SvgDocument::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                       double stroke_width) {
  elements_.push_back("<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
                      "\" y2=\"" + fmt(y2) + "\" stroke=\"" + xml_escape(stroke) +
                      "\" stroke-width=\"" + fmt(stroke_width) + "\"/>");
}

void SvgDocument::polyline(const std::vector<std::pair<double, double>>& points,
                           const std::string& stroke, double stroke_width) {
  if (points.empty()) return;
  std::string pts;
  for (const auto& [x, y] : points) {
    if (!pts.empty()) pts += ' ';
    pts += fmt(x) + "," + fmt(y);
  }
  elements_.push_back("<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" +
                      xml_escape(stroke) + "\" stroke-width=\"" + fmt(stroke_width) + "\"/>");
}

void SvgDocument::circle(double cx, double cy, double r, const std::string& fill) {
  elements_.push_back("<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(r) +
                      "\" fill=\"" + xml_escape(fill) + "\"/>");
}

void SvgDocument::rect(double x, double y, double w, double h, const std::string& fill) {
  elements_.push_back("<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) +
                      "\" height=\"" + fmt(h) + "\" fill=\"" + xml_escape(fill) + "\"/>");
}

void SvgDocument::text(double x, double y, const std::string& content, double font_size,
                       const std::string& anchor, const std::string& fill) {
  elements_.push_back("<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-family=\"sans-serif\"" +
                      " font-size=\"" + fmt(font_size) + "\" text-anchor=\"" + xml_escape(anchor) +
                      "\" fill=\"" + xml_escape(fill) + "\">" + xml_escape(content) + "</text>");
}

std::string SvgDocument::str() const {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt(width_) +
         "\" height=\"" + fmt(height_) + "\" viewBox=\"0 0 " + fmt(width_) + " " + fmt(height_) +
         "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + fmt(width_) + "\" height=\"" + fmt(height_) +
         "\" fill=\"#ffffff\"/>\n";
  for (const auto& e : elements_) {
    out += e;
    out += '\n';
  }
  out += "</svg>\n";
  return out;
}

void SvgDocument::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << str();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string series_color(std::size_t index) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return kPalette[index % 10];
}

std::string diverging_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(30 + 190 * t));
  const int g = static_cast<int>(std::lround(80 * (1.0 - std::abs(2 * t - 1))));
  const int b = static_cast<int>(std::lround(220 - 190 * t));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace sepsis
