#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ctd/data.hpp"

namespace ctd::fixtures {

// one pedestrian, frames 0, 10, ..., 190 at 25 fps, x = step index
inline std::string SinglePedestrian() {
  std::ostringstream os;
  for (int i = 0; i < 20; ++i) os << i * 10 << " 1 " << i << " 0\n";
  return os.str();
}

// straight track sampled at every frame of a 10 fps annotation, heading 30 degrees
inline std::string TenHertz(double speed) {
  std::ostringstream os;
  os.precision(17);
  const double c = std::cos(M_PI / 6), s = std::sin(M_PI / 6);
  for (int f = 0; f < 100; ++f) {
    const double d = speed * f / 10.0;
    os << f << " 4 " << 1.5 + c * d << ' ' << -2.0 + s * d << '\n';
  }
  return os.str();
}

inline std::vector<data::Vec2> JitteredPoints() {
  std::vector<data::Vec2> pts;
  for (int i = 0; i < 30; ++i)
    pts.push_back({0.8 * i + 0.05 * std::sin(1.7 * i), 0.3 * std::cos(0.9 * i)});
  return pts;
}

inline std::string JitteredAtNativeRate() {
  std::ostringstream os;
  os.precision(17);
  const auto pts = JitteredPoints();
  for (std::size_t i = 0; i < pts.size(); ++i)
    os << i * 10 << " 2 " << pts[i].x << ' ' << pts[i].y << '\n';
  return os.str();
}

// ped 1: 22 steps at y = 0; ped 2: 20 steps at y = 2; ped 3: 5 steps, far away
inline std::string TwoPedestrians() {
  std::ostringstream os;
  for (int i = 0; i < 22; ++i) os << i * 10 << " 1 " << i << " 0\n";
  for (int i = 0; i < 20; ++i) os << i * 10 << " 2 " << i << " 2\n";
  for (int i = 0; i < 5; ++i) os << i * 10 << " 3 " << i << " 50\n";
  return os.str();
}

inline std::string FarApart() {
  std::ostringstream os;
  for (int i = 0; i < 20; ++i) os << i * 10 << " 1 " << i << " 0\n";
  for (int i = 0; i < 20; ++i) os << i * 10 << " 2 " << i << " 20\n";
  return os.str();
}

// ped 1 is ordinary; ped 2 jumps 10 m between two steps
inline std::string Teleport() {
  std::ostringstream os;
  for (int i = 0; i < 20; ++i) os << i * 10 << " 1 " << i << " 0\n";
  for (int i = 0; i < 20; ++i) os << i * 10 << " 2 " << i + (i >= 10 ? 10 : 0) << " 30\n";
  return os.str();
}

}  // namespace ctd::fixtures
