#include "ctd/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ctd/error.hpp"

namespace ctd::eval {

using data::Corpus;
using data::Polyline;

namespace {

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

double Dist(const data::Vec2& a, const data::Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double MeanOf(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

AdeFde MinAdeFde(std::span<const Polyline> samples, const Polyline& truth) {
  if (samples.empty()) throw UsageError("no_samples", "min_ade_fde needs at least one sample");
  if (truth.empty()) throw UsageError("dim_mismatch", "empty ground truth");
  AdeFde best{INFINITY, INFINITY};
  for (const Polyline& s : samples) {
    if (s.size() != truth.size())
      throw UsageError("dim_mismatch", "sample length " + std::to_string(s.size()) +
                                           " vs ground truth " + std::to_string(truth.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) sum += Dist(s[i], truth[i]);
    best.ade = std::min(best.ade, sum / static_cast<double>(s.size()));
    best.fde = std::min(best.fde, Dist(s.back(), truth.back()));
  }
  return best;
}

std::vector<double> AverageRanks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double Spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("dim_mismatch", "spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = AverageRanks(x), ry = AverageRanks(y);
  const double mx = MeanOf(rx), my = MeanOf(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Corpus Subsample(const Corpus& corpus, int max_histories) {
  if (max_histories <= 0 || static_cast<std::size_t>(max_histories) >= corpus.trajectories.size())
    return corpus;
  Corpus out;
  out.meta = corpus.meta;
  out.trajectories.assign(corpus.trajectories.begin(),
                          corpus.trajectories.begin() + max_histories);
  return out;
}

MetricReport EvaluateBestOf(const Model& model, const Corpus& corpus, int n_c, int n_s,
                            std::uint64_t seed, diffusion::SampleMode mode) {
  const auto start = std::chrono::steady_clock::now();
  if (corpus.trajectories.empty()) throw DataError("empty_corpus", "nothing to evaluate");
  MetricReport r;
  r.n_c = n_c;
  r.n_s = n_s;
  for (const auto& t : corpus.trajectories) {
    const auto preds = PredictBestOf(model, t, n_c, n_s, seed, mode);
    std::vector<Polyline> futures;
    for (const auto& p : preds) futures.push_back(p.future);
    r.per_trajectory.push_back(MinAdeFde(futures, t.future));
    r.ids.push_back(t.id);
  }
  for (const auto& v : r.per_trajectory) {
    r.min_ade += v.ade;
    r.min_fde += v.fde;
  }
  r.min_ade /= static_cast<double>(r.per_trajectory.size());
  r.min_fde /= static_cast<double>(r.per_trajectory.size());
  r.seconds = Seconds(start);
  return r;
}

MetricReport ConstantVelocityBaseline(const Corpus& corpus) {
  const auto start = std::chrono::steady_clock::now();
  if (corpus.trajectories.empty()) throw DataError("empty_corpus", "nothing to evaluate");
  MetricReport r;
  r.n_c = 1;
  r.n_s = 1;
  for (const auto& t : corpus.trajectories) {
    const Polyline cv = data::ConstantVelocityFuture(t.history, corpus.meta.m);
    r.per_trajectory.push_back(MinAdeFde(std::span(&cv, 1), t.future));
    r.ids.push_back(t.id);
    r.min_ade += r.per_trajectory.back().ade;
    r.min_fde += r.per_trajectory.back().fde;
  }
  r.min_ade /= static_cast<double>(r.per_trajectory.size());
  r.min_fde /= static_cast<double>(r.per_trajectory.size());
  r.seconds = Seconds(start);
  return r;
}

std::vector<MetricReport> AblationSweep(const Model& model, const Corpus& corpus,
                                        std::span<const std::pair<int, int>> cells,
                                        std::uint64_t seed, diffusion::SampleMode mode) {
  std::vector<MetricReport> out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    out.push_back(EvaluateBestOf(model, corpus, cells[i].first, cells[i].second,
                                 DeriveSeed(seed, {0xab1a, i}), mode));
  return out;
}

std::vector<std::pair<int, int>> DefaultAblationCells() {
  return {{20, 20}, {20, 1}, {15, 5}, {10, 10}, {5, 15}};
}

std::string FeatureFor(data::Constraint c) {
  return c == data::Constraint::kSlowDown ? "mean_speed" : "signed_turn";
}

int ExpectedSign(data::Constraint c) {
  // a stronger preference means slower, or more clockwise, or more counter-clockwise
  return c == data::Constraint::kTurnLeft ? 1 : -1;
}

double FeatureValue(data::Constraint c, const Polyline& future, const Polyline& history,
                    double dt) {
  const auto f = data::ComputeFeatures(future, history, dt);
  return c == data::Constraint::kSlowDown ? f.mean_speed : f.signed_turn;
}

namespace {

// Mean feature values (one per constraint) of draws sampled at each condition.
std::vector<std::vector<double>> SampleMeans(const Model& model, const Corpus& histories,
                                             const std::vector<std::vector<double>>& conds,
                                             int draws, std::uint64_t seed,
                                             diffusion::SampleMode mode,
                                             std::vector<std::vector<double>>* pooled) {
  if (histories.trajectories.empty()) throw DataError("empty_corpus", "no histories to sample");
  if (draws < 1) throw UsageError("bad_option", "draws must be >= 1");
  // the same noise for a (history, draw) at every condition, so only c varies
  std::vector<SampleRequest> reqs;
  for (std::size_t ci = 0; ci < conds.size(); ++ci)
    for (std::size_t h = 0; h < histories.trajectories.size(); ++h)
      for (int d = 0; d < draws; ++d)
        reqs.push_back({&histories.trajectories[h], conds[ci],
                        DeriveSeed(seed, {h, static_cast<std::uint64_t>(d)})});
  const auto futures = SampleFutures(model, reqs, mode);
  const std::size_t k = model.score_count();
  const std::size_t per = histories.trajectories.size() * static_cast<std::size_t>(draws);
  std::vector<std::vector<double>> means(conds.size(), std::vector<double>(k, 0.0));
  if (pooled) pooled->assign(k, {});
  for (std::size_t i = 0; i < futures.size(); ++i) {
    const std::size_t ci = i / per;
    for (std::size_t a = 0; a < k; ++a) {
      const double v = FeatureValue(model.constraints[a], futures[i], reqs[i].trajectory->history,
                                    model.config.data.dt);
      means[ci][a] += v / static_cast<double>(per);
      if (pooled) (*pooled)[a].push_back(v);
    }
  }
  return means;
}

double MonotoneFraction(std::span<const double> v, int sign) {
  if (v.size() < 2) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if ((v[i] - v[i - 1]) * sign > 0) ++ok;
  return static_cast<double>(ok) / static_cast<double>(v.size() - 1);
}

double StdDev(std::span<const double> v) {
  const double mu = MeanOf(v);
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return v.size() < 2 ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

AdherenceReport AdherenceCurve(const Model& model, const Corpus& histories, int axis,
                               int grid_size, int draws, std::uint64_t seed,
                               diffusion::SampleMode mode) {
  const auto start = std::chrono::steady_clock::now();
  if (axis < 0 || static_cast<std::size_t>(axis) >= model.score_count())
    throw UsageError("bad_axis", "constraint axis " + std::to_string(axis) + " out of range for " +
                                     std::to_string(model.score_count()) + " scores");
  const auto a = static_cast<std::size_t>(axis);
  AdherenceReport r;
  const data::Constraint c = model.constraints[a];
  r.constraint = data::ConstraintName(c);
  r.feature = FeatureFor(c);
  r.expected_sign = ExpectedSign(c);
  r.grid = diffusion::ConditionGrid(grid_size);
  std::vector<std::vector<double>> conds;
  for (double g : r.grid) {
    std::vector<double> cond(model.score_count(), 0.5);
    cond[a] = g;
    conds.push_back(std::move(cond));
  }
  const auto means = SampleMeans(model, histories, conds, draws, seed, mode, nullptr);
  for (const auto& row : means) r.mean_feature.push_back(row[a]);
  r.rho = Spearman(r.grid, r.mean_feature);
  r.monotone_fraction = MonotoneFraction(r.mean_feature, r.expected_sign);
  r.adheres = std::abs(r.rho) >= kAdherenceThreshold;
  r.seconds = Seconds(start);
  return r;
}

GridReport MultiConstraintGrid(const Model& model, const Corpus& histories, int size, int draws,
                               std::uint64_t seed, diffusion::SampleMode mode) {
  const auto start = std::chrono::steady_clock::now();
  if (model.score_count() != 2)
    throw UsageError("score_count_mismatch",
                     "score count mismatch: grid needs 2 scores, checkpoint has " +
                         std::to_string(model.score_count()));
  GridReport r;
  r.size = size;
  for (auto c : model.constraints) {
    r.constraints.push_back(data::ConstraintName(c));
    r.features.push_back(FeatureFor(c));
  }
  const auto grid = diffusion::ConditionGrid(size);
  std::vector<std::vector<double>> conds;
  for (double c1 : grid)
    for (double c2 : grid) conds.push_back({c1, c2});
  std::vector<std::vector<double>> pooled;
  const auto means = SampleMeans(model, histories, conds, draws, seed, mode, &pooled);
  const auto n = static_cast<std::size_t>(size);
  for (std::size_t i = 0; i < conds.size(); ++i)
    r.cells.push_back({conds[i][0], conds[i][1], means[i][0], means[i][1]});

  const double sd[2] = {StdDev(pooled[0]), StdDev(pooled[1])};
  // value of feature f at (axis index along, held index)
  auto at = [&](int axis, std::size_t along, std::size_t held, int f) {
    const std::size_t cell = axis == 0 ? along * n + held : held * n + along;
    return means[cell][static_cast<std::size_t>(f)];
  };
  for (int axis = 0; axis < 2; ++axis) {
    const int other = 1 - axis;
    double rho = 0, eff = 0, cross = 0;
    for (std::size_t held = 0; held < n; ++held) {
      std::vector<double> matched, off;
      for (std::size_t along = 0; along < n; ++along) {
        matched.push_back(at(axis, along, held, axis));
        off.push_back(at(axis, along, held, other));
      }
      rho += Spearman(grid, matched);
      const auto [mn, mx] = std::minmax_element(matched.begin(), matched.end());
      const auto [on, ox] = std::minmax_element(off.begin(), off.end());
      eff += sd[axis] > 0 ? (*mx - *mn) / sd[axis] : 0.0;
      cross += sd[other] > 0 ? (*ox - *on) / sd[other] : 0.0;
    }
    r.rho[axis] = rho / static_cast<double>(n);
    r.effect[axis] = eff / static_cast<double>(n);
    r.cross[axis] = cross / static_cast<double>(n);
    r.separation[axis] = r.cross[axis] > 0 ? r.effect[axis] / r.cross[axis] : INFINITY;
  }
  r.seconds = Seconds(start);
  return r;
}

namespace {

std::ofstream OpenCsv(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("io", "cannot write " + path);
  os.precision(10);
  return os;
}

}  // namespace

void WriteMetricsCsv(const std::string& path, std::span<const MetricReport> reports) {
  auto os = OpenCsv(path);
  os << "n_c,n_s,min_ade,min_fde,histories,seconds\n";
  for (const auto& r : reports)
    os << r.n_c << ',' << r.n_s << ',' << r.min_ade << ',' << r.min_fde << ','
       << r.per_trajectory.size() << ',' << r.seconds << '\n';
}

void WriteAdherenceCsv(const std::string& path, const AdherenceReport& r) {
  auto os = OpenCsv(path);
  os << "# constraint=" << r.constraint << " rho=" << r.rho
     << " monotone_fraction=" << r.monotone_fraction << " adheres=" << (r.adheres ? 1 : 0) << '\n';
  os << "c," << r.feature << '\n';
  for (std::size_t i = 0; i < r.grid.size(); ++i) os << r.grid[i] << ',' << r.mean_feature[i] << '\n';
}

void WriteGridCsv(const std::string& path, const GridReport& r) {
  auto os = OpenCsv(path);
  os << "# rho=" << r.rho[0] << ';' << r.rho[1] << " separation=" << r.separation[0] << ';'
     << r.separation[1] << '\n';
  os << "c_" << r.constraints[0] << ",c_" << r.constraints[1] << ',' << r.features[0] << ','
     << r.features[1] << '\n';
  for (const auto& c : r.cells)
    os << c.c1 << ',' << c.c2 << ',' << c.mean_feature1 << ',' << c.mean_feature2 << '\n';
}

}  // namespace ctd::eval
