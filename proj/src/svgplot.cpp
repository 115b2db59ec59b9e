#include "rollcast/svgplot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace rollcast {

namespace {

constexpr double kPanelWidth = 480.0;
constexpr double kPanelHeight = 320.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 16.0;
constexpr double kTop = 34.0;
constexpr double kBottom = 46.0;
constexpr double kTitleHeight = 30.0;

constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  if (f < 1.5) return mag;
  if (f < 3.5) return 2.0 * mag;
  if (f < 7.5) return 5.0 * mag;
  return 10.0 * mag;
}

std::string fmt_tick(double v, double step) {
  if (std::abs(v) < step * 1e-9) v = 0.0;
  const int decimals = std::max(0, static_cast<int>(-std::floor(std::log10(step))));
  return fmt::format("{:.{}f}", v, decimals);
}

void render_panel(std::string& out, const LinePanel& panel, double ox, double oy) {
  Range xr;
  Range yr;
  for (const auto& s : panel.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.finish();
  yr.finish();
  const double pad = 0.05 * (yr.hi - yr.lo);
  yr.lo -= pad;
  yr.hi += pad;

  const double pw = kPanelWidth - kLeft - kRight;
  const double ph = kPanelHeight - kTop - kBottom;
  const double px0 = ox + kLeft;
  const double py0 = oy + kTop;
  auto sx = [&](double v) { return px0 + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double v) { return py0 + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

  out += fmt::format(R"(<g font-family="sans-serif" font-size="11">)"
                     "\n");
  out += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" text-anchor="middle" font-size="13">{}</text>)"
                     "\n",
                     px0 + pw / 2, oy + 20, xml_escape(panel.title));
  out += fmt::format(R"(<rect x="{:.1f}" y="{:.1f}" width="{:.1f}" height="{:.1f}" fill="none" stroke="#444"/>)"
                     "\n",
                     px0, py0, pw, ph);

  const double xstep = nice_step(xr.hi - xr.lo);
  for (double v = std::ceil(xr.lo / xstep) * xstep; v <= xr.hi + 1e-9 * xstep; v += xstep) {
    const double x = sx(v);
    out += fmt::format(R"(<line x1="{0:.1f}" y1="{1:.1f}" x2="{0:.1f}" y2="{2:.1f}" stroke="#ddd"/>)"
                       "\n",
                       x, py0, py0 + ph);
    out += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" text-anchor="middle">{}</text>)"
                       "\n",
                       x, py0 + ph + 15, fmt_tick(v, xstep));
  }
  const double ystep = nice_step(yr.hi - yr.lo);
  for (double v = std::ceil(yr.lo / ystep) * ystep; v <= yr.hi + 1e-9 * ystep; v += ystep) {
    const double y = sy(v);
    out += fmt::format(R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="#ddd"/>)"
                       "\n",
                       px0, y, px0 + pw, y);
    out += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" text-anchor="end">{}</text>)"
                       "\n",
                       px0 - 5, y + 4, fmt_tick(v, ystep));
  }
  out += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" text-anchor="middle">{}</text>)"
                     "\n",
                     px0 + pw / 2, py0 + ph + 34, xml_escape(panel.x_label));
  out += fmt::format(
      R"svg(<text x="{0:.1f}" y="{1:.1f}" text-anchor="middle" transform="rotate(-90 {0:.1f} {1:.1f})">{2}</text>)svg"
      "\n",
      ox + 16, py0 + ph / 2, xml_escape(panel.y_label));

  for (std::size_t k = 0; k < panel.series.size(); ++k) {
    const LineSeries& s = panel.series[k];
    const char* color = kPalette[k % kPalette.size()];
    std::string points;
    const std::size_t n = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      points += fmt::format("{}{:.2f},{:.2f}", points.empty() ? "" : " ", sx(s.x[i]), sy(s.y[i]));
    }
    out += fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.6"{} points="{}"/>)"
                       "\n",
                       color, s.dashed ? R"( stroke-dasharray="5,3")" : "", points);
    if (s.markers) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out += fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="2.5" fill="{}"/>)"
                           "\n",
                           sx(s.x[i]), sy(s.y[i]), color);
      }
    }
    const double ly = py0 + 14 + 15 * static_cast<double>(k);
    const double lx = px0 + pw - 120;
    out += fmt::format(R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="{}" stroke-width="2"{}/>)"
                       "\n",
                       lx, ly - 4, lx + 18, ly - 4, color, s.dashed ? R"( stroke-dasharray="5,3")" : "");
    out += fmt::format(R"(<text x="{:.1f}" y="{:.1f}">{}</text>)"
                       "\n",
                       lx + 22, ly, xml_escape(s.name));
  }
  out += "</g>\n";
}

}  // namespace

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_line_panels(const std::string& title, const std::vector<LinePanel>& panels, std::size_t columns) {
  columns = std::max<std::size_t>(1, std::min(columns, std::max<std::size_t>(1, panels.size())));
  const std::size_t rows = (panels.size() + columns - 1) / columns;
  const double width = kPanelWidth * static_cast<double>(columns);
  const double height = kTitleHeight + kPanelHeight * static_cast<double>(std::max<std::size_t>(rows, 1));

  std::string out;
  out += R"(<?xml version="1.0" encoding="UTF-8"?>)"
         "\n";
  out += fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{0:.0f}" height="{1:.0f}" viewBox="0 0 {0:.0f} {1:.0f}">)"
                     "\n",
                     width, height);
  out += fmt::format(R"(<rect width="{:.0f}" height="{:.0f}" fill="white"/>)"
                     "\n",
                     width, height);
  out += fmt::format(R"(<text x="{:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>)"
                     "\n",
                     width / 2, xml_escape(title));
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const double ox = kPanelWidth * static_cast<double>(i % columns);
    const double oy = kTitleHeight + kPanelHeight * static_cast<double>(i / columns);
    render_panel(out, panels[i], ox, oy);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace rollcast
