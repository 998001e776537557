#include "ddup/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "ddup/table.hpp"

namespace ddup::plot {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string general(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  bool log_y;

  double tx(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double ty(double y) const {
    const double v = log_y ? std::log10(y) : y;
    return kHeight - kBottom - (v - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

std::string text(double x, double y, const std::string& anchor, const std::string& body,
                 const std::string& extra = "") {
  return "<text x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" text-anchor=\"" + anchor + "\"" + extra + ">" +
         escape(body) + "</text>\n";
}

std::string header(const Axes& a) {
  const double cx = (kWidth - kRight + kLeft) / 2;
  const double cy = (kHeight - kBottom + kTop) / 2;
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kWidth) + "\" height=\"" + fixed(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         text(cx, 22, "middle", a.title, " font-size=\"15\"") + text(cx, kHeight - 12, "middle", a.x_label) +
         "<text transform=\"translate(16," + fixed(cy) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(a.y_label) + "</text>\n";
}

std::string frame_and_ticks(const Frame& f) {
  std::string s = "<rect x=\"" + fixed(kLeft) + "\" y=\"" + fixed(kTop) + "\" width=\"" +
                  fixed(kWidth - kLeft - kRight) + "\" height=\"" + fixed(kHeight - kTop - kBottom) +
                  "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const double py = kHeight - kBottom - (kHeight - kTop - kBottom) * i / 4.0;
    s += text(f.tx(xv), kHeight - kBottom + 16, "middle", general(xv));
    s += text(kLeft - 6, py + 4, "end", general(f.log_y ? std::pow(10.0, yv) : yv));
  }
  return s;
}

}  // namespace

std::string line_chart(const Axes& axes, const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!axes.log_y || y > 0.0);
  };
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      const double y = axes.log_y ? std::log10(s.y[i]) : s.y[i];
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  const Frame f{x0, x1, y0 - pad, y1 + pad, axes.log_y};

  std::string svg = header(axes) + frame_and_ticks(f);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string colour = kPalette[k % std::size(kPalette)];
    std::string pts, marks;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      const double px = f.tx(s.x[i]), py = f.ty(s.y[i]);
      pts += fixed(px) + "," + fixed(py) + " ";
      marks += "<circle cx=\"" + fixed(px) + "\" cy=\"" + fixed(py) + "\" r=\"3\" fill=\"" + colour + "\"/>\n";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n" + marks;
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    svg += "<line x1=\"" + fixed(kWidth - kRight + 12) + "\" y1=\"" + fixed(ly - 4) + "\" x2=\"" +
           fixed(kWidth - kRight + 32) + "\" y2=\"" + fixed(ly - 4) + "\" stroke=\"" + colour +
           "\" stroke-width=\"2\"/>\n";
    svg += text(kWidth - kRight + 38, ly, "start", s.name);
  }
  return svg + "</svg>\n";
}

std::string histogram(const Axes& axes, const std::vector<double>& counts, double lo, double hi) {
  double top = 0.0;
  for (double c : counts) top = std::max(top, c);
  if (top <= 0.0) top = 1.0;
  const Frame f{lo, hi > lo ? hi : lo + 1.0, 0.0, top * 1.05, false};
  std::string svg = header(axes) + frame_and_ticks(f);
  const double w = (f.x1 - f.x0) / static_cast<double>(std::max<std::size_t>(1, counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double xa = f.tx(lo + w * static_cast<double>(i));
    const double xb = f.tx(lo + w * static_cast<double>(i + 1));
    const double y = f.ty(counts[i]);
    svg += "<rect x=\"" + fixed(xa) + "\" y=\"" + fixed(y) + "\" width=\"" + fixed(std::max(0.5, xb - xa)) +
           "\" height=\"" + fixed(kHeight - kBottom - y) + "\" fill=\"" + kPalette[0] + "\"/>\n";
  }
  return svg + "</svg>\n";
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << contents;
  if (!out) throw Error("cannot write '" + path + "'");
}

}  // namespace ddup::plot
