#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctd/data.hpp"

namespace ctd::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

void WriteLinePlot(const std::string& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   std::span<const Series> series);

struct Track {
  double c = 0.0;  // colors the line from blue (0) to red (1)
  data::Polyline points;
};

/// History in black, ground truth dashed green, samples colored by c.
void WriteTrajectoryPlot(const std::string& path, const std::string& title,
                         const data::Polyline& history, const data::Polyline& truth,
                         std::span<const Track> samples,
                         std::span<const data::Polyline> neighbors = {});

std::string ColorFor(double c);

}  // namespace ctd::svg
