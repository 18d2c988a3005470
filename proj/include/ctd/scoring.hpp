#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctd/autodiff.hpp"
#include "ctd/data.hpp"
#include "ctd/encoder.hpp"
#include "ctd/nn.hpp"

namespace ctd::scoring {

/// MLP s(f, y) -> (0,1): LeakyReLU hidden layers, sigmoid head. Input is the
/// history feature concatenated with the flattened ego-relative future.
class ScorerHead {
 public:
  ScorerHead() = default;
  ScorerHead(nn::ParamSet& params, const std::string& prefix,
             std::size_t feature_dim, int m, const std::vector<int>& hidden,
             Rng& rng);

  /// features [B, d], futures [B, 2m] -> scores [B, 1]
  ad::Var Score(const ad::Var& features, const Tensor& futures) const;

  std::size_t input_dim() const { return input_dim_; }
  int m() const { return m_; }

 private:
  std::vector<nn::Linear> layers_;
  std::size_t input_dim_ = 0;
  int m_ = 0;
};

/// Ego-relative, scale-normalized future as a flat [x0, y0, x1, y1, ...].
std::vector<double> FlattenFuture(const data::Polyline& future,
                                  const data::Polyline& history, double scale);

/// P(a preferred over b) = exp(s_a) / (exp(s_a) + exp(s_b)), via the logistic
/// of the score difference.
double BtlProb(double s_a, double s_b);

/// -sum_i log P(winner_i); scores are [B, 1], labels index the winner.
ad::Var MleLoss(const ad::Var& scores_a, const ad::Var& scores_b,
                std::span<const int> labels);

/// Entropy of a Gaussian KDE of the scores sampled at i/K, i = 1..K. With
/// `normalize` the K density values are first scaled to sum to one, which
/// bounds the result by log K; otherwise the raw density values are used.
ad::Var EntropyPenalty(const ad::Var& scores, int grid_size, double bandwidth,
                       bool normalize = true);

struct ScoreTrainConfig {
  double lambda = 0.1;
  int grid_size = 20;
  double bandwidth = 0.05;
  bool normalize_entropy = true;
  int epochs = 150;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
  double holdout_fraction = 0.2;
};

struct HeadReport {
  std::string constraint;
  std::size_t train_pairs = 0;
  std::size_t heldout_pairs = 0;
  double heldout_accuracy = 0.0;
  double heldout_score_mean = 0.0;
  double heldout_score_std = 0.0;
  std::vector<std::size_t> histogram;  // 10 bins over [0, 1]
};

struct ScoreTrainReport {
  std::vector<double> epoch_loss;
  std::vector<HeadReport> heads;
  double seconds = 0.0;
};

/// Everything the scorer trainer touches. Heads share one encoder.
struct ScoringModel {
  encoder::Encoder* encoder = nullptr;
  nn::ParamSet* encoder_params = nullptr;
  std::vector<ScorerHead>* heads = nullptr;
  nn::ParamSet* head_params = nullptr;
  double scale = 1.0;
};

/// Minibatch Adam on sum over heads of L_mle - lambda * H. `train[k]` feeds
/// head k. When `heldout` is empty each pair set is split by
/// holdout_fraction; otherwise heldout[k] is used for head k's report.
ScoreTrainReport TrainScorer(const ScoringModel& model,
                             std::span<const data::PairSet> train,
                             std::span<const data::PairSet> heldout,
                             const ScoreTrainConfig& config);

/// Scores (a, b) for every pair with frozen weights.
std::vector<std::pair<double, double>> ScorePairs(const ScoringModel& model,
                                                  std::size_t head,
                                                  const data::PairSet& pairs);

double PairAccuracy(const std::vector<std::pair<double, double>>& scores,
                    const data::PairSet& pairs);

/// Per-trajectory scores for every head, [N][heads].
std::vector<std::vector<double>> ScoreCorpus(const ScoringModel& model,
                                             const data::Corpus& corpus);

/// Score of one (history, future) under one head.
double ScoreOne(const ScoringModel& model, std::size_t head,
                const data::Polyline& history,
                const std::vector<data::Polyline>& neighbors,
                const data::Polyline& future);

}  // namespace ctd::scoring
