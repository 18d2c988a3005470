#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctd/data.hpp"
#include "ctd/diffusion.hpp"
#include "ctd/pipeline.hpp"

namespace ctd::eval {

struct AdeFde {
  double ade = 0.0;
  double fde = 0.0;
};

/// Best ADE and best FDE over the samples, each minimized independently.
AdeFde MinAdeFde(std::span<const data::Polyline> samples, const data::Polyline& truth);

/// Ranks 1..n with ties sharing their average rank.
std::vector<double> AverageRanks(std::span<const double> values);
/// Pearson correlation of average ranks; 0 when either side is constant.
double Spearman(std::span<const double> x, std::span<const double> y);

struct MetricReport {
  int n_c = 0;
  int n_s = 0;
  double min_ade = 0.0;  // mean over histories of the per-history minimum
  double min_fde = 0.0;
  std::vector<std::int64_t> ids;
  std::vector<AdeFde> per_trajectory;
  double seconds = 0.0;
};

/// First `max_histories` trajectories of the corpus (all when 0).
data::Corpus Subsample(const data::Corpus& corpus, int max_histories);

MetricReport EvaluateBestOf(const Model& model, const data::Corpus& corpus, int n_c, int n_s,
                            std::uint64_t seed, diffusion::SampleMode mode);

/// Single constant-velocity extrapolation per history.
MetricReport ConstantVelocityBaseline(const data::Corpus& corpus);

/// One report per (N_c, N_s) cell; cell i samples with seed derived from (seed, i).
std::vector<MetricReport> AblationSweep(const Model& model, const data::Corpus& corpus,
                                        std::span<const std::pair<int, int>> cells,
                                        std::uint64_t seed, diffusion::SampleMode mode);

/// Cells of the ablation table.
std::vector<std::pair<int, int>> DefaultAblationCells();

struct AdherenceReport {
  std::string constraint;
  std::string feature;  // "mean_speed" or "signed_turn"
  int expected_sign = -1;
  std::vector<double> grid;
  std::vector<double> mean_feature;
  double rho = 0.0;
  double monotone_fraction = 0.0;
  bool adheres = false;  // |rho| >= kAdherenceThreshold
  double seconds = 0.0;
};

inline constexpr double kAdherenceThreshold = 0.3;

/// Feature each constraint steers, and the direction it should move as c grows.
std::string FeatureFor(data::Constraint c);
int ExpectedSign(data::Constraint c);
double FeatureValue(data::Constraint c, const data::Polyline& future,
                    const data::Polyline& history, double dt);

/// Sweeps c on `axis` over a midpoint grid, other axes held at 0.5.
AdherenceReport AdherenceCurve(const Model& model, const data::Corpus& histories, int axis,
                               int grid_size, int draws, std::uint64_t seed,
                               diffusion::SampleMode mode);

struct GridCell {
  double c1 = 0.0;
  double c2 = 0.0;
  double mean_feature1 = 0.0;  // feature of constraint 1
  double mean_feature2 = 0.0;
};

struct GridReport {
  int size = 0;
  std::vector<std::string> constraints;
  std::vector<std::string> features;
  std::vector<GridCell> cells;  // row-major over (c1 index, c2 index)
  double rho[2] = {0.0, 0.0};
  double effect[2] = {0.0, 0.0};  // standardized range of the matched feature
  double cross[2] = {0.0, 0.0};   // same for the other axis's feature
  double separation[2] = {0.0, 0.0};
  double seconds = 0.0;
};

GridReport MultiConstraintGrid(const Model& model, const data::Corpus& histories, int size,
                               int draws, std::uint64_t seed, diffusion::SampleMode mode);

void WriteMetricsCsv(const std::string& path, std::span<const MetricReport> reports);
void WriteAdherenceCsv(const std::string& path, const AdherenceReport& report);
void WriteGridCsv(const std::string& path, const GridReport& report);

}  // namespace ctd::eval
