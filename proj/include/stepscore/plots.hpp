#pragma once

// SVG output: per-video label timelines (ground truth bar above prediction
// bar) and training loss curves.

#include "stepscore/labels.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace stepscore {

inline const char* class_color(ClassId c) {
  static constexpr std::array<const char*, kNumClasses> palette = {"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                                                   "#911eb4", "#42d4f4", "#d9d9d9"};
  return LabelTaxonomy::is_valid(c) ? palette[static_cast<std::size_t>(c)] : "#000000";
}

namespace plots_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace plots_detail

/// One bar of colored rectangles, one per run, scaled to `width` pixels.
inline std::string timeline_bar(const FrameLabelSequence& labels, double y, double width, double height) {
  using plots_detail::fmt;
  const double total = static_cast<double>(std::max<std::int64_t>(labels.frames(), 1));
  std::ostringstream out;
  std::int64_t pos = 0;
  for (const auto& r : labels.runs()) {
    const double x = 100.0 + width * static_cast<double>(pos) / total;
    const double w = width * static_cast<double>(r.length) / total;
    out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\"" << fmt(height)
        << "\" fill=\"" << class_color(r.cls) << "\"/>\n";
    pos += r.length;
  }
  return out.str();
}

inline std::string timeline_svg(const std::string& id, const FrameLabelSequence& gt, const FrameLabelSequence& pred) {
  constexpr double width = 800, height = 24;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"920\" height=\"110\">\n"
      << "<text x=\"10\" y=\"16\" font-size=\"12\">" << id << "</text>\n"
      << "<text x=\"10\" y=\"44\" font-size=\"12\">GT</text>\n"
      << "<g id=\"gt\">\n" << timeline_bar(gt, 28, width, height) << "</g>\n"
      << "<text x=\"10\" y=\"82\" font-size=\"12\">Pred</text>\n"
      << "<g id=\"pred\">\n" << timeline_bar(pred, 66, width, height) << "</g>\n"
      << "</svg>\n";
  return out.str();
}

struct Curve {
  std::string name;
  const char* color;
  std::vector<double> values;
};

inline std::string line_chart_svg(const std::string& title, const std::vector<Curve>& curves) {
  using plots_detail::fmt;
  constexpr double W = 640, H = 360, L = 60, R = 20, Tm = 30, B = 40;
  double lo = 0.0, hi = 1e-12;
  std::size_t n = 0;
  for (const auto& c : curves) {
    for (double v : c.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, c.values.size());
  }
  auto px = [&](std::size_t i) { return L + (W - L - R) * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5); };
  auto py = [&](double v) { return H - B - (H - Tm - B) * (v - lo) / (hi - lo); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<text x=\"" << L << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<text x=\"5\" y=\"" << fmt(py(hi) + 4) << "\" font-size=\"10\">" << fmt(hi) << "</text>\n"
      << "<text x=\"5\" y=\"" << fmt(py(lo)) << "\" font-size=\"10\">" << fmt(lo) << "</text>\n";
  double legend_y = Tm + 10;
  for (const auto& c : curves) {
    out << "<polyline fill=\"none\" stroke=\"" << c.color << "\" points=\"";
    for (std::size_t i = 0; i < c.values.size(); ++i) out << (i ? " " : "") << fmt(px(i)) << "," << fmt(py(c.values[i]));
    out << "\"/>\n<text x=\"" << W - R - 120 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\"" << c.color << "\">"
        << c.name << "</text>\n";
    legend_y += 14;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace stepscore
