#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctd/autodiff.hpp"
#include "ctd/nn.hpp"
#include "ctd/rng.hpp"

namespace ctd::diffusion {

enum class ScheduleKind { kLinear, kCosine };
ScheduleKind ParseScheduleKind(const std::string& name);
std::string ScheduleKindName(ScheduleKind kind);

/// Index t - 1 holds step t, for t = 1..T.
struct Schedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

/// Cosine betas are clipped into [beta_start, beta_end].
Schedule MakeSchedule(int steps, double beta_start, double beta_end,
                      ScheduleKind kind = ScheduleKind::kLinear);

/// sqrt(abar_t) * y0 + sqrt(1 - abar_t) * eps, elementwise; 1 <= t <= T.
Tensor NoiseToT(const Tensor& y0, int t, const Schedule& schedule, const Tensor& eps);

/// [count, width] sin/cos embedding of integer steps.
Tensor TimeEmbedding(std::span<const int> steps, int width);

struct DenoiserOptions {
  int m = 12;
  int feature_dim = 96;
  int score_count = 1;
  int width = 64;
  int heads = 4;
  int depth = 2;
  int ffn = 128;
  int time_dim = 32;
  int cond_dim = 32;  // projected condition width per token
};

/// eps_theta(y_t, f, c, t). Each of the m future steps is a token built from
/// [y_t step, time embedding, projected condition]; tokens go through
/// pre-norm self-attention blocks, then a gated output layer modulated by
/// [time embedding, condition] and a linear head to two channels.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(nn::ParamSet& params, const std::string& prefix,
           const DenoiserOptions& options, Rng& rng);

  /// y_t [B, 2m], cond [B, feature_dim + score_count], t per row -> [B, 2m].
  ad::Var Predict(const ad::Var& y_t, const Tensor& cond, std::span<const int> t) const;

  const DenoiserOptions& options() const { return options_; }
  std::size_t cond_width() const {
    return static_cast<std::size_t>(options_.feature_dim + options_.score_count);
  }

 private:
  struct Block {
    nn::Linear q, k, v, o, ff1, ff2;
  };
  DenoiserOptions options_;
  nn::Linear cond_proj_, token_in_, squash_, gate_, hyper_bias_, head_;
  ad::Var position_;
  std::vector<Block> blocks_;
};

/// Condition rows [feature | scores].
Tensor MakeCondition(std::span<const double> feature, std::span<const double> scores);

struct DiffusionTrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-3;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

struct DiffusionTrainReport {
  std::vector<double> epoch_loss;
  double initial_loss = 0.0;  // loss of the first minibatch before any update
  double seconds = 0.0;
};

/// Minimizes the per-sample squared noise error, averaged over the batch.
/// features [N, d], scores [N, k], futures [N, 2m] already normalized.
DiffusionTrainReport TrainDiffusion(const Denoiser& denoiser, nn::ParamSet& params,
                                    const Schedule& schedule, const Tensor& features,
                                    const Tensor& scores, const Tensor& futures,
                                    const DiffusionTrainConfig& config);

enum class SampleMode { kAncestral, kPaperMean };
SampleMode ParseSampleMode(const std::string& name);
std::string SampleModeName(SampleMode mode);

/// Runs t = T..1 from `y_T` [B, 2m]. Row b draws its noise from rngs[b].
Tensor SampleFrom(const Denoiser& denoiser, const Schedule& schedule, const Tensor& cond,
                  Tensor y_T, SampleMode mode, std::span<Rng> rngs);

/// Draws y_T ~ N(0, I) from each row's rng, then samples.
Tensor Sample(const Denoiser& denoiser, const Schedule& schedule, const Tensor& cond,
              SampleMode mode, std::span<Rng> rngs);

/// Midpoint grid (i + 0.5) / count, i = 0..count-1.
std::vector<double> ConditionGrid(int count);

}  // namespace ctd::diffusion
