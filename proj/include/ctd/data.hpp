#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ctd/rng.hpp"

namespace ctd::data {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// A sequence of positions sampled every dt seconds, in meters.
using Polyline = std::vector<Vec2>;

struct Trajectory {
  std::int64_t id = 0;
  Polyline history;                 // n points
  Polyline future;                  // m points
  std::vector<Polyline> neighbors;  // each n points, nearest first
  std::string maneuver;             // generator tag ("left", ...); may be empty
};

struct CorpusMeta {
  std::string scenario;
  std::uint64_t seed = 0;
  double dt = 0.4;
  int n = 8;
  int m = 12;
};

struct Corpus {
  CorpusMeta meta;
  std::vector<Trajectory> trajectories;

  /// Throws a data error unless the corpus is non-empty, every entry has the
  /// declared n/m, coordinates are finite, and no step exceeds v_max * dt.
  void Validate(double v_max) const;
};

enum class Constraint { kSlowDown, kTurnRight, kTurnLeft };

std::string ConstraintName(Constraint c);
Constraint ParseConstraint(const std::string& name);

struct PairwiseSample {
  std::int64_t source_id = 0;
  Polyline history;
  Polyline future_a;
  Polyline future_b;
  int label = 0;  // index of the preferred future
  std::vector<Polyline> neighbors;
};

struct PairSet {
  Constraint constraint = Constraint::kSlowDown;
  int n = 8;
  int m = 12;
  double dt = 0.4;
  std::vector<PairwiseSample> pairs;
};

struct TrajectoryFeatures {
  double mean_speed = 0.0;   // m/s, over the m steps leaving the last history point
  double signed_turn = 0.0;  // radians, counter-clockwise positive
  bool turn_undefined = false;
};

/// Speed and heading-change summary of a future relative to its history.
TrajectoryFeatures ComputeFeatures(const Polyline& future,
                                   const Polyline& history, double dt);

double WrapAngle(double a);

/// Automated pairwise labeler for a structured proxy constraint.
struct ConstraintAnnotator {
  Constraint kind = Constraint::kSlowDown;
  double tie_threshold = 0.1;

  /// Preference value; larger is more aligned with the constraint.
  double Preference(const TrajectoryFeatures& f) const;
  /// Index of the preferred future, or nullopt when the gap is a tie.
  std::optional<int> Label(const Polyline& history, const Polyline& a,
                           const Polyline& b, double dt) const;
};

/// Default tie threshold for a constraint (0.1 m/s or 0.087 rad).
double DefaultTieThreshold(Constraint c);

struct SyntheticOptions {
  std::string scenario = "t-intersection";
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  int n = 8;
  int m = 12;
  double dt = 0.4;
  double speed_min = 0.5;
  double speed_max = 2.5;
  double jitter_sigma = 0.03;
  // probability of left / right / straight
  std::array<double, 3> maneuver_mix{0.4, 0.4, 0.2};
};

/// Synthetic junction/hall corpus; each trajectory has its own RNG stream
/// derived from (seed, id).
Corpus GenerateSynthetic(const SyntheticOptions& options);
Trajectory GenerateTrajectory(const SyntheticOptions& options, std::int64_t id);

struct CandidateOptions {
  double speed_factor_min = 0.4;
  double speed_factor_max = 1.6;
  double max_turn = 1.5707963267948966;
  double v_cap = 3.8;
};

/// Constant-velocity extrapolation with a smooth random speed change and a
/// smooth random heading drift.
Polyline CandidateFuture(const Polyline& history, int m, double dt, Rng& rng,
                         const CandidateOptions& options = {});

/// Constant-velocity baseline: last history velocity held for m steps.
Polyline ConstantVelocityFuture(const Polyline& history, int m);

struct PairOptions {
  double fraction = 0.01;
  int pairs_per_history = 1;
  std::uint64_t seed = 0;
  CandidateOptions candidates;
};

struct PairReport {
  std::size_t histories = 0;
  std::size_t attempted = 0;
  std::size_t skipped_ties = 0;
};

/// Samples round(fraction * N) histories (at least one) and labels pairs of
/// generated candidate futures. Tied pairs are dropped.
PairSet MakePairs(const Corpus& corpus, const ConstraintAnnotator& annotator,
                  const PairOptions& options, PairReport* report = nullptr);

/// Deterministic id-hash split; true for roughly `test_fraction` of ids.
bool IsTestId(std::int64_t id, double test_fraction);
Corpus SplitCorpus(const Corpus& corpus, double test_fraction, bool test);

// line-delimited JSON; first record is a header
void WriteCorpus(std::ostream& os, const Corpus& corpus);
Corpus ReadCorpus(std::istream& is);
void SaveCorpus(const std::string& path, const Corpus& corpus);
Corpus LoadCorpus(const std::string& path);

void WritePairs(std::ostream& os, const PairSet& pairs);
PairSet ReadPairs(std::istream& is);
void SavePairs(const std::string& path, const PairSet& pairs);
PairSet LoadPairs(const std::string& path);

struct ImportOptions {
  int n = 8;
  int m = 12;
  double dt = 0.4;
  double frame_rate = 25.0;  // annotation frames per second
  int stride = 1;
  double neighbor_radius = 5.0;
  int max_neighbors = 8;
  double v_max = 4.0;
};

struct ImportReport {
  std::size_t files = 0;
  std::size_t lines = 0;
  std::size_t tracks = 0;
  std::size_t skipped_short = 0;
  std::size_t skipped_speed = 0;
  std::size_t segments = 0;
};

/// Reads whitespace-separated `frame_id ped_id x y` annotations, resamples
/// each pedestrian to dt by linear interpolation on a shared time grid and
/// cuts (n + m)-step windows. `path` is a file or a directory; for a
/// directory every *.txt whose path contains `scene` is read.
Corpus ImportEthUcy(const std::string& path, const std::string& scene,
                    const ImportOptions& options, ImportReport* report = nullptr);
Corpus ImportEthUcyStream(std::istream& is, const std::string& scene,
                          const ImportOptions& options,
                          ImportReport* report = nullptr);

}  // namespace ctd::data
