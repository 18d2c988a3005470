#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctd/checkpoint.hpp"
#include "ctd/config.hpp"
#include "ctd/data.hpp"
#include "ctd/diffusion.hpp"
#include "ctd/encoder.hpp"
#include "ctd/nn.hpp"
#include "ctd/scoring.hpp"

namespace ctd {

/// Encoder, one scorer head per constraint and (once trained) the denoiser,
/// sharing one feature space and one normalization scale.
struct Model {
  Config config;
  std::vector<data::Constraint> constraints;
  double scale = 1.0;  // meters per normalized unit

  nn::ParamSet encoder_params;
  nn::ParamSet scorer_params;
  nn::ParamSet denoiser_params;
  encoder::Encoder encoder;
  std::vector<scoring::ScorerHead> heads;
  diffusion::Denoiser denoiser;
  diffusion::Schedule schedule;
  bool has_denoiser = false;

  std::size_t score_count() const { return constraints.size(); }
  scoring::ScoringModel scoring();
  scoring::ScoringModel scoring() const;
};

/// Fresh encoder + heads, weights drawn from config.seed.
Model CreateModel(const Config& config, std::vector<data::Constraint> constraints,
                  double scale);
/// Adds a freshly initialized denoiser (replacing any existing one).
void AddDenoiser(Model& model);

Checkpoint ToCheckpoint(const Model& model);
Model FromCheckpoint(const Checkpoint& ckpt);
void SaveModel(const std::string& path, const Model& model);
Model LoadModel(const std::string& path);

/// RMS of ego-relative future coordinates over the corpus.
double FutureScale(const data::Corpus& corpus);

/// [N, feature_dim] features with frozen encoder weights.
Tensor EncodeCorpus(const Model& model, const data::Corpus& corpus);
/// [N, 2m] ego-relative futures divided by the model scale.
Tensor FutureMatrix(const Model& model, const data::Corpus& corpus);

/// Trains the denoiser on a scored corpus; scores[i] holds one value per
/// constraint for trajectory i.
/// Trains the encoder and heads with the model's scorer config; `train[k]`
/// feeds head k. Empty `heldout` splits each train set instead.
scoring::ScoreTrainReport TrainScorers(Model& model, std::span<const data::PairSet> train,
                                       std::span<const data::PairSet> heldout = {});

diffusion::DiffusionTrainReport TrainDenoiser(Model& model, const data::Corpus& corpus,
                                              const std::vector<std::vector<double>>& scores);

struct SampleRequest {
  const data::Trajectory* trajectory = nullptr;
  std::vector<double> scores;  // one c per constraint
  std::uint64_t seed = 0;
};

/// One future (world frame, meters) per request. Requests are independent:
/// each draws from its own seed, so results do not depend on batching.
std::vector<data::Polyline> SampleFutures(const Model& model,
                                          std::span<const SampleRequest> requests,
                                          diffusion::SampleMode mode);

struct Prediction {
  std::int64_t history_id = 0;
  std::vector<double> scores;
  int draw = 0;
  data::Polyline future;
};

/// N_c midpoint-grid values of c (shared by every constraint), N_s draws each.
std::vector<Prediction> PredictBestOf(const Model& model, const data::Trajectory& trajectory,
                                      int n_c, int n_s, std::uint64_t seed,
                                      diffusion::SampleMode mode);

/// N_s draws at fixed scores.
std::vector<Prediction> PredictAt(const Model& model, const data::Trajectory& trajectory,
                                  const std::vector<double>& scores, int n_s,
                                  std::uint64_t seed, diffusion::SampleMode mode);

/// "id,<constraint>,..." with one row per trajectory.
void WriteScoresCsv(const std::string& path, const data::Corpus& corpus,
                    const std::vector<data::Constraint>& constraints,
                    const std::vector<std::vector<double>>& scores);
/// Scores aligned with corpus order; every trajectory must be present and
/// the columns must name `constraints` in order.
std::vector<std::vector<double>> ReadScoresCsv(const std::string& path,
                                               const data::Corpus& corpus,
                                               const std::vector<data::Constraint>& constraints);

void WritePredictionsCsv(const std::string& path, const Model& model,
                         std::span<const Prediction> predictions);

}  // namespace ctd
