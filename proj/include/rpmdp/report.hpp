#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "rpmdp/linmdp.hpp"
#include "rpmdp/mdp_io.hpp"

namespace rpmdp {

// Shortest round-trip decimal form; '.' separator by construction
// (locale-independent), used for every CSV/SVG number we emit.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Fixed two decimals for SVG coordinates (keeps files small + deterministic).
inline std::string format_coord(double v) {
  const double r = std::round(v * 100.0) / 100.0;
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), r);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Trial CSV: header + one row per episode, '\n' endings.
// ---------------------------------------------------------------------------
inline std::string trial_csv(const std::vector<double>& cumulative_cost,
                             const std::vector<double>& episode_cost,
                             const std::vector<double>& agreement) {
  std::string out = "episode,cumulative_cost,episode_cost,agreement\n";
  for (size_t i = 0; i < cumulative_cost.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    out += format_double(cumulative_cost[i]);
    out += ',';
    out += format_double(episode_cost[i]);
    out += ',';
    out += format_double(agreement[i]);
    out += '\n';
  }
  return out;
}

struct ParsedTrialCsv {
  std::vector<double> cumulative_cost, episode_cost, agreement;
};

inline ParsedTrialCsv parse_trial_csv(const std::string& content) {
  ParsedTrialCsv out;
  size_t pos = content.find('\n');
  if (pos == std::string::npos) throw ValidationError("trial csv: missing header");
  while (pos != std::string::npos && pos + 1 < content.size()) {
    const size_t end = content.find('\n', pos + 1);
    const std::string line =
        content.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
    pos = end;
    if (line.empty()) continue;
    double vals[4];
    size_t field_start = 0;
    for (int f = 0; f < 4; ++f) {
      const size_t comma = line.find(',', field_start);
      const std::string tok = line.substr(
          field_start, comma == std::string::npos ? std::string::npos : comma - field_start);
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), vals[f]);
      if (res.ec != std::errc{}) throw ValidationError("trial csv: bad number '" + tok + "'");
      field_start = comma == std::string::npos ? line.size() : comma + 1;
    }
    out.cumulative_cost.push_back(vals[1]);
    out.episode_cost.push_back(vals[2]);
    out.agreement.push_back(vals[3]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minimal deterministic SVG line chart: one polyline per series, shared axes
// with min/max tick labels. Long series are strided down to <= 2000 points.
// ---------------------------------------------------------------------------
inline std::string svg_line_chart(const std::string& title, const std::string& y_label,
                                  const std::vector<std::vector<double>>& series) {
  const double W = 900, Ht = 540, x0 = 70, x1 = 880, y0 = 500, y1 = 30;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  size_t max_len = 0;
  double vmin = 0.0, vmax = 0.0;
  bool any = false;
  for (const auto& s : series)
    for (double v : s) {
      if (!any) {
        vmin = vmax = v;
        any = true;
      }
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  for (const auto& s : series) max_len = std::max(max_len, s.size());
  if (!any || max_len < 1) {
    vmin = 0;
    vmax = 1;
    max_len = 1;
  }
  if (vmax <= vmin) vmax = vmin + 1.0;
  auto sx = [&](double t) { return x0 + (x1 - x0) * (max_len > 1 ? (t - 1) / double(max_len - 1) : 0.5); };
  auto sy = [&](double v) { return y0 + (y1 - y0) * ((v - vmin) / (vmax - vmin)); };
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_coord(W) +
         "\" height=\"" + format_coord(Ht) + "\" viewBox=\"0 0 900 540\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"900\" height=\"540\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"450\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" + title + "</text>\n";
  svg += "<line x1=\"" + format_coord(x0) + "\" y1=\"" + format_coord(y0) + "\" x2=\"" +
         format_coord(x1) + "\" y2=\"" + format_coord(y0) + "\" stroke=\"#000000\"/>\n";
  svg += "<line x1=\"" + format_coord(x0) + "\" y1=\"" + format_coord(y0) + "\" x2=\"" +
         format_coord(x0) + "\" y2=\"" + format_coord(y1) + "\" stroke=\"#000000\"/>\n";
  svg += "<text x=\"" + format_coord(x0) + "\" y=\"520\" font-family=\"sans-serif\" "
         "font-size=\"12\">1</text>\n";
  svg += "<text x=\"" + format_coord(x1) + "\" y=\"520\" text-anchor=\"end\" "
         "font-family=\"sans-serif\" font-size=\"12\">" + std::to_string(max_len) + "</text>\n";
  svg += "<text x=\"" + format_coord(x0 - 6) + "\" y=\"" + format_coord(y0) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
         format_double(vmin) + "</text>\n";
  svg += "<text x=\"" + format_coord(x0 - 6) + "\" y=\"" + format_coord(y1 + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
         format_double(vmax) + "</text>\n";
  svg += "<text x=\"16\" y=\"270\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 270)\" text-anchor=\"middle\">" + y_label + "</text>\n";
  svg += "<text x=\"475\" y=\"532\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">episode</text>\n";
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    if (s.empty()) continue;
    const size_t stride = std::max<size_t>(1, s.size() / 2000);
    std::string pts;
    for (size_t i = 0; i < s.size(); i += stride) {
      pts += format_coord(sx(double(i + 1)));
      pts += ',';
      pts += format_coord(sy(s[i]));
      pts += ' ';
    }
    if ((s.size() - 1) % stride != 0) {
      pts += format_coord(sx(double(s.size())));
      pts += ',';
      pts += format_coord(sy(s.back()));
      pts += ' ';
    }
    if (!pts.empty()) pts.pop_back();
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += palette[k % 10];
    svg += "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace rpmdp
