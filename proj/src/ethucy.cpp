#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ctd/data.hpp"
#include "ctd/error.hpp"

namespace ctd::data {
namespace {

struct Sample {
  double frame;
  Vec2 pos;
};

// a pedestrian resampled onto grid indices [first, first + points.size())
struct GridTrack {
  std::int64_t ped;
  long first;
  Polyline points;
};

using RawTracks = std::map<std::int64_t, std::vector<Sample>>;

RawTracks ParseAnnotations(std::istream& is, ImportReport& rep) {
  RawTracks tracks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double frame, ped, x, y;
    std::string extra;
    if (!(ss >> frame >> ped >> x >> y) || (ss >> extra) || !std::isfinite(frame) ||
        !std::isfinite(x) || !std::isfinite(y) || ped != std::floor(ped))
      throw DataError("malformed_line",
                      "line " + std::to_string(lineno) + ": expected 'frame_id ped_id x y'");
    ++rep.lines;
    tracks[static_cast<std::int64_t>(ped)].push_back({frame, {x, y}});
  }
  return tracks;
}

GridTrack Resample(std::int64_t ped, std::vector<Sample> samples, double step) {
  std::sort(samples.begin(), samples.end(),
            [](const Sample& a, const Sample& b) { return a.frame < b.frame; });
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].frame == samples[i - 1].frame)
      throw DataError("duplicate_frame", "pedestrian " + std::to_string(ped) +
                                             " has two rows for frame " +
                                             std::to_string(samples[i].frame));
  GridTrack out{ped, 0, {}};
  const double f0 = samples.front().frame;
  const double f1 = samples.back().frame;
  const long k0 = static_cast<long>(std::ceil(f0 / step - 1e-9));
  const long k1 = static_cast<long>(std::floor(f1 / step + 1e-9));
  out.first = k0;
  std::size_t seg = 0;
  for (long k = k0; k <= k1; ++k) {
    const double f = std::clamp(static_cast<double>(k) * step, f0, f1);
    while (seg + 1 < samples.size() - 1 && samples[seg + 1].frame < f) ++seg;
    if (samples.size() == 1) {
      out.points.push_back(samples[0].pos);
      continue;
    }
    const Sample& a = samples[seg];
    const Sample& b = samples[seg + 1];
    const double w = (f - a.frame) / (b.frame - a.frame);
    out.points.push_back({a.pos.x + w * (b.pos.x - a.pos.x), a.pos.y + w * (b.pos.y - a.pos.y)});
  }
  return out;
}

void CutSegments(const std::vector<GridTrack>& tracks, const ImportOptions& o,
                 Corpus& corpus, ImportReport& rep) {
  const long window = o.n + o.m;
  const double limit = o.v_max * o.dt;
  for (const GridTrack& t : tracks) {
    const long len = static_cast<long>(t.points.size());
    if (len < window) {
      ++rep.skipped_short;
      continue;
    }
    for (long s = 0; s + window <= len; s += o.stride) {
      bool too_fast = false;
      for (long i = s + 1; i < s + window; ++i) {
        const Vec2 a = t.points[i - 1], b = t.points[i];
        if (std::hypot(b.x - a.x, b.y - a.y) > limit + 1e-12) too_fast = true;
      }
      if (too_fast) {
        ++rep.skipped_speed;
        continue;
      }
      Trajectory traj;
      traj.id = static_cast<std::int64_t>(corpus.trajectories.size());
      traj.history.assign(t.points.begin() + s, t.points.begin() + s + o.n);
      traj.future.assign(t.points.begin() + s + o.n, t.points.begin() + s + window);

      // neighbours: other pedestrians present over the whole history window
      const long g0 = t.first + s;
      const long g1 = g0 + o.n - 1;
      const Vec2 ego = traj.history.back();
      std::vector<std::pair<double, Polyline>> found;
      for (const GridTrack& other : tracks) {
        if (other.ped == t.ped) continue;
        const long last = other.first + static_cast<long>(other.points.size()) - 1;
        if (other.first > g0 || last < g1) continue;
        Polyline nb(other.points.begin() + (g0 - other.first),
                    other.points.begin() + (g1 - other.first) + 1);
        const double d = std::hypot(nb.back().x - ego.x, nb.back().y - ego.y);
        if (d <= o.neighbor_radius) found.emplace_back(d, std::move(nb));
      }
      std::stable_sort(found.begin(), found.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (std::size_t i = 0; i < found.size() && static_cast<int>(i) < o.max_neighbors; ++i)
        traj.neighbors.push_back(std::move(found[i].second));
      corpus.trajectories.push_back(std::move(traj));
      ++rep.segments;
    }
  }
}

void ImportInto(std::istream& is, const ImportOptions& o, Corpus& corpus,
                ImportReport& rep) {
  RawTracks raw = ParseAnnotations(is, rep);
  const double step = o.dt * o.frame_rate;
  std::vector<GridTrack> tracks;
  for (auto& [ped, samples] : raw) tracks.push_back(Resample(ped, std::move(samples), step));
  rep.tracks += tracks.size();
  CutSegments(tracks, o, corpus, rep);
}

void CheckOptions(const ImportOptions& o) {
  if (o.n < 2 || o.m < 1 || !(o.dt > 0) || !(o.frame_rate > 0) || o.stride < 1)
    throw UsageError("bad_option", "import options out of range");
}

Corpus Finish(Corpus corpus, const ImportReport& rep) {
  if (rep.lines == 0) throw DataError("no_tracks", "no tracks");
  if (corpus.trajectories.empty())
    throw DataError("no_segments", "no track is long enough for one (n + m) window");
  return corpus;
}

}  // namespace

Corpus ImportEthUcyStream(std::istream& is, const std::string& scene,
                          const ImportOptions& options, ImportReport* report) {
  CheckOptions(options);
  ImportReport rep;
  rep.files = 1;
  Corpus corpus;
  corpus.meta = {scene, 0, options.dt, options.n, options.m};
  ImportInto(is, options, corpus, rep);
  if (report) *report = rep;
  return Finish(std::move(corpus), rep);
}

Corpus ImportEthUcy(const std::string& path, const std::string& scene,
                    const ImportOptions& options, ImportReport* report) {
  namespace fs = std::filesystem;
  CheckOptions(options);
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
      if (scene.empty() || e.path().string().find(scene) != std::string::npos)
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw DataError("io", "cannot read " + path);
  }
  if (files.empty()) throw DataError("no_tracks", "no tracks");

  ImportReport rep;
  Corpus corpus;
  corpus.meta = {scene, 0, options.dt, options.n, options.m};
  for (const fs::path& f : files) {
    std::ifstream is(f);
    if (!is) throw DataError("io", "cannot read " + f.string());
    try {
      ImportInto(is, options, corpus, rep);
    } catch (const Error& e) {
      throw Error(e.kind(), e.code(), f.string() + ": " + e.what());
    }
    ++rep.files;
  }
  if (report) *report = rep;
  return Finish(std::move(corpus), rep);
}

}  // namespace ctd::data
