#pragma once

// Minimal deterministic SVG line chart: one line per series (mean over the
// series' files at each x) with a shaded +/- one std band.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "dcir/harness/csv.hpp"

namespace dcir::harness {

struct SeriesPoint {
  double x = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct Series {
  std::string label;
  std::vector<SeriesPoint> points;
};

// Aggregate several logs of one method: mean and population std of y at each x.
inline Series aggregate_series(const std::string& label, const std::vector<CsvTable>& tables,
                               const std::string& x_col = "env_steps", const std::string& y_col = "mean_return") {
  std::map<double, std::vector<double>> at;
  for (const auto& t : tables) {
    const auto xs = t.numbers(x_col);
    const auto ys = t.numbers(y_col);
    for (std::size_t k = 0; k < xs.size(); ++k) at[xs[k]].push_back(ys[k]);
  }
  Series s{label, {}};
  for (const auto& [x, ys] : at) {
    double m = 0.0;
    for (double y : ys) m += y;
    m /= static_cast<double>(ys.size());
    double v = 0.0;
    for (double y : ys) v += (y - m) * (y - m);
    v /= static_cast<double>(ys.size());
    s.points.push_back({x, m, std::sqrt(v)});
  }
  return s;
}

namespace detail {
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}
}  // namespace detail

inline std::string render_svg(const std::vector<Series>& series, const std::string& x_label = "env steps",
                              const std::string& y_label = "mean return") {
  const double W = 720, H = 440, left = 70, right = 170, top = 30, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.mean - p.stddev);
      ymax = std::max(ymax, p.mean + p.stddev);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  auto X = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto Y = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  using detail::num;
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" viewBox=\"0 0 " +
       num(W) + " " + num(H) + "\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
       num(top + ph) + "\" stroke=\"black\"/>\n";
  o += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
       "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
    o += "<text x=\"" + num(X(xv)) + "\" y=\"" + num(top + ph + 18) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + num(xv) + "</text>\n";
    o += "<text x=\"" + num(left - 6) + "\" y=\"" + num(Y(yv) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" +
         num(yv) + "</text>\n";
  }
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(H - 15) +
       "\" font-size=\"13\" text-anchor=\"middle\">" + detail::xml_escape(x_label) + "</text>\n";
  o += "<text x=\"18\" y=\"" + num(top + ph / 2) + "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       num(top + ph / 2) + ")\">" + detail::xml_escape(y_label) + "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string col = palette[si % 7];
    if (s.points.size() > 1) {
      std::string band;
      for (const auto& p : s.points) band += num(X(p.x)) + "," + num(Y(p.mean + p.stddev)) + " ";
      for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
        band += num(X(it->x)) + "," + num(Y(it->mean - it->stddev)) + " ";
      o += "<polygon points=\"" + band + "\" fill=\"" + col + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
      std::string line;
      for (const auto& p : s.points) line += num(X(p.x)) + "," + num(Y(p.mean)) + " ";
      o += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"2\"/>\n";
    }
    for (const auto& p : s.points)
      o += "<circle cx=\"" + num(X(p.x)) + "\" cy=\"" + num(Y(p.mean)) + "\" r=\"3\" fill=\"" + col + "\"/>\n";
    const double ly = top + 16.0 * static_cast<double>(si) + 8;
    o += "<rect x=\"" + num(left + pw + 12) + "\" y=\"" + num(ly - 8) + "\" width=\"12\" height=\"12\" fill=\"" + col +
         "\"/>\n";
    o += "<text x=\"" + num(left + pw + 30) + "\" y=\"" + num(ly + 2) + "\" font-size=\"11\">" +
         detail::xml_escape(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

}  // namespace dcir::harness
