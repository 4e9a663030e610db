#pragma once

// Minimal SVG line and bar charts over CSV columns.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "esds/common.hpp"

namespace esds {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw Error(ErrorCode::InvalidParams, "no column '" + name + "'");
  }

  std::vector<double> numbers(const std::string& name) const {
    const auto c = static_cast<std::size_t>(column(name));
    std::vector<double> out;
    for (const auto& r : rows) {
      if (c >= r.size()) throw Error(ErrorCode::Format, "short CSV row");
      char* end = nullptr;
      const double v = std::strtod(r[c].c_str(), &end);
      if (end == r[c].c_str()) throw Error(ErrorCode::Format, "not a number in column " + name + ": " + r[c]);
      out.push_back(v);
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& name) const {
    const auto c = static_cast<std::size_t>(column(name));
    std::vector<std::string> out;
    for (const auto& r : rows) out.push_back(c < r.size() ? r[c] : std::string());
    return out;
  }
};

/// Comma-separated, no quoting (the files this tool writes never need it).
inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
    } else {
      t.rows.push_back(split(line));
    }
  }
  if (t.header.empty()) throw Error(ErrorCode::EmptyInput, "empty CSV");
  return t;
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace plot_detail {

inline constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
inline const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else o += c;
  }
  return o;
}

inline std::string num(double v) { return format_fixed(v, 2); }

inline std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + num(kW / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + esc(title) + "</text>\n";
}

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : 0.5 * (a + b); }
};

inline Axis padded(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

inline std::string frame(const Axis& y, const std::string& xlabel, const std::string& ylabel) {
  std::string s;
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y.map(v, y0, y1);
    s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\">" + format_fixed(v, 3) + "</text>\n";
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(py) +
         "\" stroke=\"#ddd\"/>\n";
  }
  s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kH - 15) + "\" text-anchor=\"middle\">" + esc(xlabel) + "</text>\n";
  s += "<text transform=\"translate(16," + num((y0 + y1) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" + esc(ylabel) +
       "</text>\n";
  return s;
}

}  // namespace plot_detail

inline std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                                  const std::string& ylabel) {
  using namespace plot_detail;
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw Error(ErrorCode::InvalidParams, "series x/y length mismatch");
    for (double v : s.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
    for (double v : s.y)
      if (std::isfinite(v)) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
  }
  if (!std::isfinite(xlo) || !std::isfinite(ylo)) throw Error(ErrorCode::EmptyInput, "nothing to plot");
  const Axis xa = padded(xlo, xhi), ya = padded(ylo, yhi);
  std::string svg = header(title) + frame(ya, xlabel, ylabel);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  svg += "<text x=\"" + num(x0) + "\" y=\"" + num(kH - 15) + "\">" + format_fixed(xlo, 1) + "</text>\n";
  svg += "<text x=\"" + num(x1) + "\" y=\"" + num(kH - 15) + "\" text-anchor=\"end\">" + format_fixed(xhi, 1) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kColors[i % std::size(kColors)];
    std::string pts;
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      if (!std::isfinite(s.y[j])) continue;
      pts += num(xa.map(s.x[j], x0, x1)) + "," + num(ya.map(s.y[j], y0, y1)) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    svg += "<text x=\"" + num(x1 - 4) + "\" y=\"" + num(y1 + 14 * (i + 1)) + "\" text-anchor=\"end\" fill=\"" + color + "\">" +
           esc(s.label) + "</text>\n";
  }
  return svg + "</svg>\n";
}

inline std::string bar_chart_svg(const std::vector<std::string>& labels, const std::vector<double>& values,
                                 const std::string& title, const std::string& ylabel) {
  using namespace plot_detail;
  if (labels.size() != values.size() || labels.empty()) throw Error(ErrorCode::InvalidParams, "bar labels/values mismatch");
  double lo = 0.0, hi = 0.0;
  for (double v : values) lo = std::min(lo, v), hi = std::max(hi, v);
  const Axis ya = padded(lo, hi);
  std::string svg = header(title) + frame(ya, "", ylabel);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  const double slot = (x1 - x0) / static_cast<double>(values.size());
  const double base = ya.map(0.0, y0, y1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double top = ya.map(values[i], y0, y1);
    const double bx = x0 + slot * (static_cast<double>(i) + 0.15);
    svg += "<rect x=\"" + num(bx) + "\" y=\"" + num(std::min(top, base)) + "\" width=\"" + num(slot * 0.7) +
           "\" height=\"" + num(std::abs(base - top)) + "\" fill=\"" + kColors[i % std::size(kColors)] + "\"/>\n";
    svg += "<text x=\"" + num(bx + slot * 0.35) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" + esc(labels[i]) +
           "</text>\n";
    svg += "<text x=\"" + num(bx + slot * 0.35) + "\" y=\"" + num(std::min(top, base) - 4) + "\" text-anchor=\"middle\">" +
           format_fixed(values[i], 3) + "</text>\n";
  }
  return svg + "</svg>\n";
}

}  // namespace esds
