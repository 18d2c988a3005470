#include "ctd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ctd/error.hpp"

namespace ctd::svg {

namespace {

constexpr double kW = 640, kH = 480, kPad = 56;

struct Box {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  void Add(double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  void Finish(bool equal_aspect) {
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-9) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-9) y0 -= 0.5, y1 += 0.5;
    if (equal_aspect) {
      const double span = std::max(x1 - x0, y1 - y0);
      const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
      x0 = cx - span / 2, x1 = cx + span / 2;
      y0 = cy - span / 2, y1 = cy + span / 2;
    }
  }
  double X(double x) const { return kPad + (x - x0) / (x1 - x0) * (kW - 2 * kPad); }
  double Y(double y) const { return kH - kPad - (y - y0) / (y1 - y0) * (kH - 2 * kPad); }
};

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string Path(const Box& b, const std::vector<double>& xs, const std::vector<double>& ys) {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t i = 0; i < xs.size(); ++i)
    os << (i ? " L" : "M") << b.X(xs[i]) << ' ' << b.Y(ys[i]);
  return os.str();
}

std::string Path(const Box& b, const data::Polyline& p) {
  std::vector<double> xs, ys;
  for (const auto& v : p) {
    xs.push_back(v.x);
    ys.push_back(v.y);
  }
  return Path(b, xs, ys);
}

void Header(std::ostream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
     << Escape(title) << "</text>\n";
}

void Axes(std::ostream& os, const Box& b, const std::string& xl, const std::string& yl) {
  os << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kW - 2 * kPad
     << "\" height=\"" << kH - 2 * kPad << "\" fill=\"none\" stroke=\"#888\"/>\n";
  char buf[64];
  for (int i = 0; i <= 4; ++i) {
    const double fx = b.x0 + (b.x1 - b.x0) * i / 4, fy = b.y0 + (b.y1 - b.y0) * i / 4;
    std::snprintf(buf, sizeof buf, "%.3g", fx);
    os << "<text x=\"" << b.X(fx) << "\" y=\"" << kH - kPad + 16 << "\" text-anchor=\"middle\">"
       << buf << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.3g", fy);
    os << "<text x=\"" << kPad - 6 << "\" y=\"" << b.Y(fy) + 4 << "\" text-anchor=\"end\">" << buf
       << "</text>\n";
  }
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
     << Escape(xl) << "</text>\n"
     << "<text transform=\"translate(14," << kH / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << Escape(yl) << "</text>\n";
}

std::ofstream Open(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("io", "cannot write " + path);
  return os;
}

}  // namespace

std::string ColorFor(double c) {
  c = std::clamp(c, 0.0, 1.0);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(255 * c)), 40,
                static_cast<int>(std::lround(255 * (1 - c))));
  return buf;
}

void WriteLinePlot(const std::string& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, std::span<const Series> series) {
  Box b;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) b.Add(s.x[i], s.y[i]);
  b.Finish(false);
  auto os = Open(path);
  Header(os, title);
  Axes(os, b, x_label, y_label);
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % 5];
    os << "<path d=\"" << Path(b, series[k].x, series[k].y) << "\" fill=\"none\" stroke=\""
       << color << "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < series[k].x.size(); ++i)
      os << "<circle cx=\"" << b.X(series[k].x[i]) << "\" cy=\"" << b.Y(series[k].y[i])
         << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << kW - kPad - 4 << "\" y=\"" << kPad + 16 + 16 * k
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << Escape(series[k].label)
       << "</text>\n";
  }
  os << "</svg>\n";
}

void WriteTrajectoryPlot(const std::string& path, const std::string& title,
                         const data::Polyline& history, const data::Polyline& truth,
                         std::span<const Track> samples, std::span<const data::Polyline> neighbors) {
  Box b;
  for (const auto& p : history) b.Add(p.x, p.y);
  for (const auto& p : truth) b.Add(p.x, p.y);
  for (const auto& s : samples)
    for (const auto& p : s.points) b.Add(p.x, p.y);
  for (const auto& n : neighbors)
    for (const auto& p : n) b.Add(p.x, p.y);
  b.Finish(true);
  auto os = Open(path);
  Header(os, title);
  Axes(os, b, "x [m]", "y [m]");
  for (const auto& n : neighbors)
    os << "<path d=\"" << Path(b, n) << "\" fill=\"none\" stroke=\"#bbb\" stroke-width=\"1.5\"/>\n";
  for (const auto& s : samples) {
    data::Polyline joined;
    if (!history.empty()) joined.push_back(history.back());
    joined.insert(joined.end(), s.points.begin(), s.points.end());
    os << "<path d=\"" << Path(b, joined) << "\" fill=\"none\" stroke=\"" << ColorFor(s.c)
       << "\" stroke-opacity=\"0.5\" stroke-width=\"1\"/>\n";
  }
  if (!truth.empty()) {
    data::Polyline joined;
    if (!history.empty()) joined.push_back(history.back());
    joined.insert(joined.end(), truth.begin(), truth.end());
    os << "<path d=\"" << Path(b, joined)
       << "\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\" stroke-dasharray=\"5 3\"/>\n";
  }
  os << "<path d=\"" << Path(b, history) << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2.5\"/>\n";
  os << "</svg>\n";
}

}  // namespace ctd::svg
