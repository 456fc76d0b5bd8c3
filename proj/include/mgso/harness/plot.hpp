#pragma once

// Static SVG convergence plots: one panel per (function, dim), log-scaled
// f_delta against evaluations, median line and q1-q3 band per algorithm.

#include "mgso/harness/quantiles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgso::harness {

struct PlotOptions {
  double floor = 1e-12;  // f_delta values below this are drawn at the floor
  int panel_width = 360;
  int panel_height = 260;
  int columns = 3;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[i % (sizeof colors / sizeof colors[0])];
}

}  // namespace detail

/// Writes the figure for `rows`. Rows must satisfy q1 <= median <= q3.
inline void emit_plot(const std::vector<QuartileRow>& rows, std::ostream& out,
                      const PlotOptions& opt = {}) {
  if (rows.empty()) throw std::invalid_argument("nothing to plot");
  for (const auto& r : rows) {
    if (!(r.q1 <= r.median && r.median <= r.q3)) {
      throw std::invalid_argument("quartiles out of order for " + r.algorithm + "/" + r.function);
    }
  }

  struct Panel {
    std::string function;
    int dim;
  };
  std::vector<Panel> panels;
  std::vector<std::string> algorithms;
  for (const auto& r : rows) {
    if (std::none_of(panels.begin(), panels.end(),
                     [&](const Panel& p) { return p.function == r.function && p.dim == r.dim; })) {
      panels.push_back({r.function, r.dim});
    }
    if (std::find(algorithms.begin(), algorithms.end(), r.algorithm) == algorithms.end()) {
      algorithms.push_back(r.algorithm);
    }
  }

  const int cols = std::max(1, std::min<int>(opt.columns, static_cast<int>(panels.size())));
  const int nrows = (static_cast<int>(panels.size()) + cols - 1) / cols;
  const int legend_h = 24 + 18 * static_cast<int>(algorithms.size());
  const int width = cols * opt.panel_width;
  const int height = nrows * opt.panel_height + legend_h;
  const double ml = 56, mr = 12, mt = 26, mb = 40;
  auto ly = [&](double v) { return std::log10(std::max(v, opt.floor)); };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double ox = static_cast<double>(static_cast<int>(p) % cols * opt.panel_width);
    const double oy = static_cast<double>(static_cast<int>(p) / cols * opt.panel_height);
    const double pw = opt.panel_width - ml - mr;
    const double ph = opt.panel_height - mt - mb;

    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& r : rows) {
      if (r.function != panel.function || r.dim != panel.dim) continue;
      xmin = std::min(xmin, std::log10(static_cast<double>(r.eval_index)));
      xmax = std::max(xmax, std::log10(static_cast<double>(r.eval_index)));
      ymin = std::min(ymin, ly(r.q1));
      ymax = std::max(ymax, ly(r.q3));
    }
    xmin = std::floor(xmin);
    xmax = std::max(std::ceil(xmax), xmin + 1.0);
    ymin = std::floor(ymin);
    ymax = std::max(std::ceil(ymax), ymin + 1.0);
    auto sx = [&](int e) {
      return ox + ml + (std::log10(static_cast<double>(e)) - xmin) / (xmax - xmin) * pw;
    };
    auto sy = [&](double v) { return oy + mt + (ymax - ly(v)) / (ymax - ymin) * ph; };

    out << "<g>\n<text x=\"" << detail::fmt(ox + ml + pw / 2) << "\" y=\"" << detail::fmt(oy + 16)
        << "\" text-anchor=\"middle\" font-size=\"13\">" << detail::xml_escape(panel.function) << " "
        << panel.dim << "D</text>\n";
    out << "<rect x=\"" << detail::fmt(ox + ml) << "\" y=\"" << detail::fmt(oy + mt) << "\" width=\""
        << detail::fmt(pw) << "\" height=\"" << detail::fmt(ph)
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    const int ystep = std::max(1, static_cast<int>(std::ceil((ymax - ymin) / 8.0)));
    for (int e = static_cast<int>(ymin); e <= static_cast<int>(ymax); e += ystep) {
      const double y = oy + mt + (ymax - e) / (ymax - ymin) * ph;
      out << "<line x1=\"" << detail::fmt(ox + ml) << "\" y1=\"" << detail::fmt(y) << "\" x2=\""
          << detail::fmt(ox + ml + pw) << "\" y2=\"" << detail::fmt(y)
          << "\" stroke=\"#ddd\"/>\n<text x=\"" << detail::fmt(ox + ml - 4) << "\" y=\""
          << detail::fmt(y + 4) << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
    for (int e = static_cast<int>(xmin); e <= static_cast<int>(xmax); ++e) {
      const double x = ox + ml + (e - xmin) / (xmax - xmin) * pw;
      out << "<line x1=\"" << detail::fmt(x) << "\" y1=\"" << detail::fmt(oy + mt) << "\" x2=\""
          << detail::fmt(x) << "\" y2=\"" << detail::fmt(oy + mt + ph)
          << "\" stroke=\"#ddd\"/>\n<text x=\"" << detail::fmt(x) << "\" y=\""
          << detail::fmt(oy + mt + ph + 14) << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
    }
    out << "<text x=\"" << detail::fmt(ox + ml + pw / 2) << "\" y=\""
        << detail::fmt(oy + opt.panel_height - 8) << "\" text-anchor=\"middle\">evaluations</text>\n";
    out << "<text transform=\"translate(" << detail::fmt(ox + 12) << ","
        << detail::fmt(oy + mt + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">f_delta</text>\n";

    for (std::size_t a = 0; a < algorithms.size(); ++a) {
      std::vector<const QuartileRow*> pts;
      for (const auto& r : rows) {
        if (r.function == panel.function && r.dim == panel.dim && r.algorithm == algorithms[a]) {
          pts.push_back(&r);
        }
      }
      if (pts.empty()) continue;
      std::sort(pts.begin(), pts.end(),
                [](const QuartileRow* l, const QuartileRow* r) { return l->eval_index < r->eval_index; });
      out << "<polygon fill=\"" << detail::palette(a) << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (const auto* r : pts) out << detail::fmt(sx(r->eval_index)) << ',' << detail::fmt(sy(r->q3)) << ' ';
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        out << detail::fmt(sx((*it)->eval_index)) << ',' << detail::fmt(sy((*it)->q1)) << ' ';
      }
      out << "\"/>\n<polyline fill=\"none\" stroke=\"" << detail::palette(a)
          << "\" stroke-width=\"1.8\" points=\"";
      for (const auto* r : pts) out << detail::fmt(sx(r->eval_index)) << ',' << detail::fmt(sy(r->median)) << ' ';
      out << "\"/>\n";
    }
    out << "</g>\n";
  }

  const double legend_y = nrows * opt.panel_height + 8.0;
  for (std::size_t a = 0; a < algorithms.size(); ++a) {
    const double y = legend_y + 18.0 * static_cast<double>(a);
    out << "<line x1=\"16\" y1=\"" << detail::fmt(y + 6) << "\" x2=\"40\" y2=\"" << detail::fmt(y + 6)
        << "\" stroke=\"" << detail::palette(a) << "\" stroke-width=\"3\"/>\n<text x=\"46\" y=\""
        << detail::fmt(y + 10) << "\">" << detail::xml_escape(algorithms[a])
        << " (median, q1-q3 band)</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace mgso::harness
