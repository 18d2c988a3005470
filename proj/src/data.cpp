#include "ctd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ctd/error.hpp"

namespace ctd::data {
namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegenerate = 1e-9;

double Norm(Vec2 v) { return std::hypot(v.x, v.y); }
Vec2 Minus(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }

json PolylineJson(const Polyline& p) {
  json arr = json::array();
  for (const Vec2& v : p) arr.push_back({v.x, v.y});
  return arr;
}

std::string At(std::size_t lineno) { return "line " + std::to_string(lineno) + ": "; }

Polyline PolylineFrom(const json& j, const char* what, std::size_t lineno) {
  if (!j.is_array()) throw DataError("bad_record", At(lineno) + what + " is not an array");
  Polyline out;
  out.reserve(j.size());
  for (const json& pt : j) {
    if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
      throw DataError("bad_record", At(lineno) + what + " holds a non-[x,y] entry");
    out.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  return out;
}

std::vector<Polyline> NeighborsFrom(const json& j, std::size_t lineno) {
  std::vector<Polyline> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw DataError("bad_record", At(lineno) + "neighbors is not an array");
  for (const json& nb : j) out.push_back(PolylineFrom(nb, "neighbor", lineno));
  return out;
}

json NeighborsJson(const std::vector<Polyline>& nbs) {
  json arr = json::array();
  for (const Polyline& p : nbs) arr.push_back(PolylineJson(p));
  return arr;
}

json ParseLine(const std::string& line, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("bad_record",
                    "line " + std::to_string(lineno) + ": " + e.what());
  }
}

template <typename T>
T Field(const json& j, const char* key, std::size_t lineno) {
  if (!j.contains(key))
    throw DataError("bad_record",
                    "line " + std::to_string(lineno) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError("bad_record", "line " + std::to_string(lineno) +
                                      ": field '" + key + "' has the wrong type");
  }
}

// position along a straight-arc-straight path at arc length s
struct TurnPath {
  Vec2 turn_start;
  double heading0;
  double s_turn;
  double radius;
  double angle;  // signed, counter-clockwise positive

  Vec2 At(double s) const {
    if (s <= s_turn) {
      const double d = s - s_turn;
      return {turn_start.x + d * std::cos(heading0), turn_start.y + d * std::sin(heading0)};
    }
    const double arc = radius * std::abs(angle);
    const double sign = angle >= 0 ? 1.0 : -1.0;
    const double u = std::min(s - s_turn, arc);
    Vec2 p = turn_start;
    if (arc > 0) {
      // circle centre to the left (ccw) or right (cw) of the heading
      const double cx = turn_start.x - sign * radius * std::sin(heading0);
      const double cy = turn_start.y + sign * radius * std::cos(heading0);
      const double phi = heading0 + sign * u / radius;
      p = {cx + sign * radius * std::sin(phi), cy - sign * radius * std::cos(phi)};
    }
    const double rest = s - s_turn - u;
    const double h1 = heading0 + (arc > 0 ? angle : 0.0);
    return {p.x + rest * std::cos(h1), p.y + rest * std::sin(h1)};
  }
};

Vec2 TruncatedJitter(Rng& rng, double sigma) {
  if (sigma <= 0) return {};
  for (;;) {
    Vec2 j{sigma * StandardNormal(rng), sigma * StandardNormal(rng)};
    if (Norm(j) <= 2.0 * sigma) return j;
  }
}

int UniformInt(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(std::floor(Uniform(rng, 0.0, 1.0) * (hi - lo + 1)));
}

}  // namespace

void Corpus::Validate(double v_max) const {
  if (trajectories.empty()) throw DataError("empty_corpus", "corpus has no trajectories");
  const double limit = v_max * meta.dt;
  for (const Trajectory& t : trajectories) {
    const std::string who = "trajectory " + std::to_string(t.id);
    if (static_cast<int>(t.history.size()) != meta.n ||
        static_cast<int>(t.future.size()) != meta.m)
      throw DataError("bad_length", who + " does not match n/m of the corpus");
    for (const Polyline& nb : t.neighbors)
      if (static_cast<int>(nb.size()) != meta.n)
        throw DataError("bad_length", who + " has a neighbor of wrong length");
    Polyline all = t.history;
    all.insert(all.end(), t.future.begin(), t.future.end());
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (!std::isfinite(all[i].x) || !std::isfinite(all[i].y))
        throw DataError("non_finite", who + " has a non-finite coordinate");
      if (i > 0 && Norm(Minus(all[i], all[i - 1])) > limit + 1e-12)
        throw DataError("speed_bound", who + " exceeds v_max between steps " +
                                           std::to_string(i - 1) + " and " +
                                           std::to_string(i));
    }
  }
}

std::string ConstraintName(Constraint c) {
  switch (c) {
    case Constraint::kSlowDown: return "slow-down";
    case Constraint::kTurnRight: return "turn-right";
    case Constraint::kTurnLeft: return "turn-left";
  }
  return "?";
}

Constraint ParseConstraint(const std::string& name) {
  if (name == "slow-down") return Constraint::kSlowDown;
  if (name == "turn-right") return Constraint::kTurnRight;
  if (name == "turn-left") return Constraint::kTurnLeft;
  throw UsageError("unknown_constraint", "unknown constraint '" + name +
                                             "' (slow-down|turn-right|turn-left)");
}

double WrapAngle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

TrajectoryFeatures ComputeFeatures(const Polyline& future, const Polyline& history,
                                   double dt) {
  if (future.empty() || history.size() < 2)
    throw UsageError("bad_length", "features need a future and at least two history points");
  TrajectoryFeatures f;
  double total = 0.0;
  Vec2 prev = history.back();
  for (const Vec2& p : future) {
    total += Norm(Minus(p, prev));
    prev = p;
  }
  f.mean_speed = total / (static_cast<double>(future.size()) * dt);

  const Vec2 h = Minus(history.back(), history.front());
  const Vec2 d = Minus(future.back(), future.front());
  if (Norm(h) < kDegenerate || Norm(d) < kDegenerate) {
    f.turn_undefined = true;
    f.signed_turn = 0.0;
    return f;
  }
  f.signed_turn = WrapAngle(std::atan2(d.y, d.x) - std::atan2(h.y, h.x));
  return f;
}

double ConstraintAnnotator::Preference(const TrajectoryFeatures& f) const {
  switch (kind) {
    case Constraint::kSlowDown: return -f.mean_speed;
    case Constraint::kTurnRight: return -f.signed_turn;
    case Constraint::kTurnLeft: return f.signed_turn;
  }
  return 0.0;
}

std::optional<int> ConstraintAnnotator::Label(const Polyline& history,
                                              const Polyline& a, const Polyline& b,
                                              double dt) const {
  const double pa = Preference(ComputeFeatures(a, history, dt));
  const double pb = Preference(ComputeFeatures(b, history, dt));
  if (std::abs(pa - pb) < tie_threshold) return std::nullopt;
  return pa > pb ? 0 : 1;
}

double DefaultTieThreshold(Constraint c) {
  return c == Constraint::kSlowDown ? 0.1 : 0.087;
}

Trajectory GenerateTrajectory(const SyntheticOptions& o, std::int64_t id) {
  const bool junction = o.scenario == "t-intersection";
  if (!junction && o.scenario != "straight-hall")
    throw UsageError("unknown_scenario", "unknown scenario '" + o.scenario +
                                             "' (t-intersection|straight-hall)");
  Rng rng = MakeRng(o.seed, {static_cast<std::uint64_t>(id)});
  const int total = o.n + o.m;

  const double v0 = Uniform(rng, o.speed_min, o.speed_max);
  const double u = Uniform(rng, 0.0, 1.0);
  Trajectory t;
  t.id = id;
  double angle = 0.0;
  if (u < o.maneuver_mix[0]) {
    t.maneuver = "left";
    angle = junction ? kPi / 2 : Uniform(rng, 0.15, 0.4);
  } else if (u < o.maneuver_mix[0] + o.maneuver_mix[1]) {
    t.maneuver = "right";
    angle = junction ? -kPi / 2 : -Uniform(rng, 0.15, 0.4);
  } else {
    t.maneuver = "straight";
  }
  const int turn_step = std::clamp(UniformInt(rng, o.n - 3, o.n + 5), 1, total - 2);
  const double radius = Uniform(rng, 1.5, 5.0);
  const int speed_step = std::clamp(UniformInt(rng, o.n - 2, o.n + 4), 1, total - 2);
  const double target =
      std::clamp(v0 * Uniform(rng, 0.4, 1.6), 0.2, o.speed_max);

  // arc length reached at each step with a 4-step linear speed ramp
  std::vector<double> s(total, 0.0);
  for (int k = 1; k < total; ++k) {
    const double w = std::clamp((k - speed_step) / 4.0, 0.0, 1.0);
    s[k] = s[k - 1] + (v0 + w * (target - v0)) * o.dt;
  }
  TurnPath path;
  path.heading0 = junction ? kPi / 2 : 0.0;
  path.s_turn = s[turn_step];
  path.radius = radius;
  path.angle = angle;
  path.turn_start = junction ? Vec2{Uniform(rng, -0.5, 0.5), -radius}
                             : Vec2{0.0, Uniform(rng, -1.0, 1.0)};
  for (int k = 0; k < total; ++k) {
    Vec2 p = path.At(s[k]);
    const Vec2 j = TruncatedJitter(rng, o.jitter_sigma);
    p.x += j.x;
    p.y += j.y;
    (k < o.n ? t.history : t.future).push_back(p);
  }
  return t;
}

Corpus GenerateSynthetic(const SyntheticOptions& options) {
  if (options.count < 1) throw UsageError("bad_count", "count must be >= 1");
  // fail here rather than inside the parallel loop
  GenerateTrajectory(options, 0);
  Corpus c;
  c.meta = {options.scenario, options.seed, options.dt, options.n, options.m};
  c.trajectories.resize(options.count);
  // each id has its own stream, so this loop is order independent
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < options.count; ++i)
    c.trajectories[i] = GenerateTrajectory(options, static_cast<std::int64_t>(i));
  return c;
}

Polyline ConstantVelocityFuture(const Polyline& history, int m) {
  const Vec2 v = Minus(history.back(), history[history.size() - 2]);
  Polyline out;
  Vec2 p = history.back();
  for (int k = 0; k < m; ++k) {
    p = {p.x + v.x, p.y + v.y};
    out.push_back(p);
  }
  return out;
}

Polyline CandidateFuture(const Polyline& history, int m, double dt, Rng& rng,
                         const CandidateOptions& o) {
  const std::size_t n = history.size();
  const std::size_t back = std::min<std::size_t>(3, n - 1);
  const Vec2 d = Minus(history.back(), history[n - 1 - back]);
  const double speed0 = Norm(d) / (back * dt);
  const double heading0 = Norm(d) > kDegenerate ? std::atan2(d.y, d.x) : 0.0;
  const double factor = Uniform(rng, o.speed_factor_min, o.speed_factor_max);
  const double turn = Uniform(rng, -o.max_turn, o.max_turn);
  const double turn_span = std::max(1.0, 0.6 * m);

  Polyline out;
  Vec2 p = history.back();
  for (int k = 1; k <= m; ++k) {
    const double speed =
        std::min(o.v_cap, speed0 * (1.0 + (factor - 1.0) * std::min(1.0, k / 4.0)));
    const double heading = heading0 + turn * std::min(1.0, k / turn_span);
    p = {p.x + speed * dt * std::cos(heading), p.y + speed * dt * std::sin(heading)};
    out.push_back(p);
  }
  return out;
}

PairSet MakePairs(const Corpus& corpus, const ConstraintAnnotator& annotator,
                  const PairOptions& options, PairReport* report) {
  if (!(options.fraction > 0.0 && options.fraction <= 1.0))
    throw UsageError("bad_fraction", "fraction must be in (0, 1]");
  if (options.pairs_per_history < 1)
    throw UsageError("bad_pairs_per_history", "pairs_per_history must be >= 1");
  if (corpus.trajectories.empty()) throw DataError("empty_corpus", "corpus is empty");

  const std::size_t total = corpus.trajectories.size();
  const std::size_t count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(options.fraction * total)));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng pick = MakeRng(options.seed, {0x9a1c5});
  for (std::size_t i = 0; i + 1 < total; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  Uniform(pick, 0.0, 1.0) * static_cast<double>(total - i));
    std::swap(order[i], order[std::min(j, total - 1)]);
  }
  order.resize(std::min(count, total));
  std::sort(order.begin(), order.end());

  PairSet out;
  out.constraint = annotator.kind;
  out.n = corpus.meta.n;
  out.m = corpus.meta.m;
  out.dt = corpus.meta.dt;
  PairReport rep;
  rep.histories = order.size();
  for (std::size_t idx : order) {
    const Trajectory& t = corpus.trajectories[idx];
    for (int j = 0; j < options.pairs_per_history; ++j) {
      Rng rng = MakeRng(options.seed, {static_cast<std::uint64_t>(t.id),
                                       static_cast<std::uint64_t>(j)});
      Polyline a = CandidateFuture(t.history, corpus.meta.m, corpus.meta.dt, rng,
                                   options.candidates);
      Polyline b = CandidateFuture(t.history, corpus.meta.m, corpus.meta.dt, rng,
                                   options.candidates);
      ++rep.attempted;
      const auto label = annotator.Label(t.history, a, b, corpus.meta.dt);
      if (!label || a == b) {
        ++rep.skipped_ties;
        continue;
      }
      out.pairs.push_back({t.id, t.history, std::move(a), std::move(b), *label, t.neighbors});
    }
  }
  if (report) *report = rep;
  return out;
}

bool IsTestId(std::int64_t id, double test_fraction) {
  const std::uint64_t h = DeriveSeed(0x7e57, {static_cast<std::uint64_t>(id)});
  return static_cast<double>(h >> 11) * 0x1.0p-53 < test_fraction;
}

Corpus SplitCorpus(const Corpus& corpus, double test_fraction, bool test) {
  Corpus out;
  out.meta = corpus.meta;
  for (const Trajectory& t : corpus.trajectories)
    if (IsTestId(t.id, test_fraction) == test) out.trajectories.push_back(t);
  return out;
}

void WriteCorpus(std::ostream& os, const Corpus& corpus) {
  json header = {{"type", "corpus"}, {"version", 1},
                 {"scenario", corpus.meta.scenario}, {"seed", corpus.meta.seed},
                 {"dt", corpus.meta.dt}, {"n", corpus.meta.n}, {"m", corpus.meta.m}};
  os << header.dump() << '\n';
  for (const Trajectory& t : corpus.trajectories) {
    json rec = {{"id", t.id},
                {"history", PolylineJson(t.history)},
                {"future", PolylineJson(t.future)},
                {"neighbors", NeighborsJson(t.neighbors)}};
    if (!t.maneuver.empty()) rec["maneuver"] = t.maneuver;
    os << rec.dump() << '\n';
  }
}

Corpus ReadCorpus(std::istream& is) {
  Corpus c;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = ParseLine(line, lineno);
    if (!have_header) {
      if (j.value("type", "") != "corpus")
        throw DataError("bad_header", "line 1: expected a corpus header record");
      c.meta.scenario = Field<std::string>(j, "scenario", lineno);
      c.meta.seed = Field<std::uint64_t>(j, "seed", lineno);
      c.meta.dt = Field<double>(j, "dt", lineno);
      c.meta.n = Field<int>(j, "n", lineno);
      c.meta.m = Field<int>(j, "m", lineno);
      have_header = true;
      continue;
    }
    Trajectory t;
    t.id = Field<std::int64_t>(j, "id", lineno);
    t.history = PolylineFrom(j.contains("history") ? j["history"] : json(), "history", lineno);
    t.future = PolylineFrom(j.contains("future") ? j["future"] : json(), "future", lineno);
    t.neighbors = NeighborsFrom(j.value("neighbors", json()), lineno);
    t.maneuver = j.value("maneuver", "");
    if (static_cast<int>(t.history.size()) != c.meta.n ||
        static_cast<int>(t.future.size()) != c.meta.m)
      throw DataError("bad_length", "line " + std::to_string(lineno) +
                                        ": history/future length disagrees with header");
    c.trajectories.push_back(std::move(t));
  }
  if (!have_header) throw DataError("bad_header", "corpus file is empty");
  if (c.trajectories.empty()) throw DataError("empty_corpus", "corpus has no trajectories");
  return c;
}

void SaveCorpus(const std::string& path, const Corpus& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("io", "cannot write " + path);
  WriteCorpus(os, corpus);
}

Corpus LoadCorpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("io", "cannot read " + path);
  return ReadCorpus(is);
}

void WritePairs(std::ostream& os, const PairSet& pairs) {
  json header = {{"type", "pairs"}, {"version", 1},
                 {"constraint", ConstraintName(pairs.constraint)},
                 {"dt", pairs.dt}, {"n", pairs.n}, {"m", pairs.m}};
  os << header.dump() << '\n';
  for (const PairwiseSample& p : pairs.pairs) {
    json rec = {{"source_id", p.source_id},
                {"history", PolylineJson(p.history)},
                {"future_a", PolylineJson(p.future_a)},
                {"future_b", PolylineJson(p.future_b)},
                {"label", p.label},
                {"neighbors", NeighborsJson(p.neighbors)}};
    os << rec.dump() << '\n';
  }
}

PairSet ReadPairs(std::istream& is) {
  PairSet ps;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = ParseLine(line, lineno);
    if (!have_header) {
      if (j.value("type", "") != "pairs")
        throw DataError("bad_header", "line 1: expected a pairs header record");
      ps.constraint = ParseConstraint(Field<std::string>(j, "constraint", lineno));
      ps.dt = Field<double>(j, "dt", lineno);
      ps.n = Field<int>(j, "n", lineno);
      ps.m = Field<int>(j, "m", lineno);
      have_header = true;
      continue;
    }
    PairwiseSample p;
    p.source_id = j.value("source_id", std::int64_t{-1});
    p.history = PolylineFrom(j.contains("history") ? j["history"] : json(), "history", lineno);
    p.future_a = PolylineFrom(j.contains("future_a") ? j["future_a"] : json(), "future_a", lineno);
    p.future_b = PolylineFrom(j.contains("future_b") ? j["future_b"] : json(), "future_b", lineno);
    p.label = Field<int>(j, "label", lineno);
    p.neighbors = NeighborsFrom(j.value("neighbors", json()), lineno);
    if (p.label != 0 && p.label != 1)
      throw DataError("bad_label", "line " + std::to_string(lineno) + ": label must be 0 or 1");
    if (static_cast<int>(p.history.size()) != ps.n ||
        static_cast<int>(p.future_a.size()) != ps.m ||
        static_cast<int>(p.future_b.size()) != ps.m)
      throw DataError("bad_length", "line " + std::to_string(lineno) +
                                        ": lengths disagree with header");
    ps.pairs.push_back(std::move(p));
  }
  if (!have_header) throw DataError("bad_header", "pairs file is empty");
  return ps;
}

void SavePairs(const std::string& path, const PairSet& pairs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("io", "cannot write " + path);
  WritePairs(os, pairs);
}

PairSet LoadPairs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("io", "cannot read " + path);
  return ReadPairs(is);
}

}  // namespace ctd::data
