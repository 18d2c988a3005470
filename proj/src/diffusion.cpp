#include "ctd/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ctd/error.hpp"

namespace ctd::diffusion {

using ad::Var;

ScheduleKind ParseScheduleKind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw UsageError("bad_schedule", "unknown schedule kind '" + name + "'");
}

std::string ScheduleKindName(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

Schedule MakeSchedule(int steps, double beta_start, double beta_end, ScheduleKind kind) {
  if (steps < 1) throw UsageError("bad_schedule", "T must be >= 1");
  if (!(beta_start > 0) || !(beta_start <= beta_end) || !(beta_end < 1))
    throw UsageError("bad_schedule", "need 0 < beta_start <= beta_end < 1");
  Schedule s;
  s.steps = steps;
  const auto t_count = static_cast<std::size_t>(steps);
  s.beta.resize(t_count);
  if (kind == ScheduleKind::kLinear) {
    for (std::size_t i = 0; i < t_count; ++i) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
      s.beta[i] = beta_start + frac * (beta_end - beta_start);
    }
  } else {
    constexpr double kOffset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + kOffset) / (1 + kOffset) * M_PI / 2);
      return c * c;
    };
    for (std::size_t i = 0; i < t_count; ++i) {
      const double b = 1.0 - f(static_cast<double>(i + 1)) / f(static_cast<double>(i));
      s.beta[i] = std::clamp(b, beta_start, beta_end);
    }
  }
  s.alpha.resize(t_count);
  s.alpha_bar.resize(t_count);
  double prod = 1.0;
  for (std::size_t i = 0; i < t_count; ++i) {
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

Tensor NoiseToT(const Tensor& y0, int t, const Schedule& schedule, const Tensor& eps) {
  if (t < 1 || t > schedule.steps)
    throw UsageError("bad_step", "t=" + std::to_string(t) + " outside 1.." +
                                     std::to_string(schedule.steps));
  if (y0.shape() != eps.shape())
    throw UsageError("shape_mismatch", "noise_to_t: y0 " + ShapeString(y0.shape()) +
                                           " vs eps " + ShapeString(eps.shape()));
  const double ab = schedule.alpha_bar[static_cast<std::size_t>(t - 1)];
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(y0.shape());
  for (std::size_t i = 0; i < y0.size(); ++i) out[i] = a * y0[i] + b * eps[i];
  return out;
}

Tensor TimeEmbedding(std::span<const int> steps, int width) {
  const auto half = static_cast<std::size_t>(width / 2);
  Tensor out({steps.size(), static_cast<std::size_t>(width)});
  for (std::size_t r = 0; r < steps.size(); ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(half));
      out.at(r, i) = std::sin(steps[r] * freq);
      out.at(r, half + i) = std::cos(steps[r] * freq);
    }
  }
  return out;
}

Denoiser::Denoiser(nn::ParamSet& params, const std::string& prefix,
                   const DenoiserOptions& options, Rng& rng)
    : options_(options) {
  const auto& o = options;
  if (o.m < 1 || o.width < 1 || o.heads < 1 || o.width % o.heads != 0 || o.depth < 0 ||
      o.time_dim < 2 || o.time_dim % 2 != 0 || o.score_count < 1 || o.feature_dim < 0)
    throw UsageError("bad_option", "denoiser dims out of range");
  const auto w = static_cast<std::size_t>(o.width);
  const auto td = static_cast<std::size_t>(o.time_dim);
  const std::size_t cw = cond_width();
  cond_proj_ = nn::Linear(params, prefix + ".cond_proj", cw, static_cast<std::size_t>(o.cond_dim), rng);
  token_in_ = nn::Linear(params, prefix + ".token_in", 2 + td + static_cast<std::size_t>(o.cond_dim), w, rng);
  Tensor pos({static_cast<std::size_t>(o.m), w});
  for (double& x : pos.vec()) x = 0.02 * StandardNormal(rng);
  position_ = params.Add(prefix + ".position", std::move(pos));
  for (int b = 0; b < o.depth; ++b) {
    const std::string p = prefix + ".block" + std::to_string(b);
    Block blk;
    blk.q = nn::Linear(params, p + ".q", w, w, rng);
    blk.k = nn::Linear(params, p + ".k", w, w, rng);
    blk.v = nn::Linear(params, p + ".v", w, w, rng);
    blk.o = nn::Linear(params, p + ".o", w, w, rng);
    blk.ff1 = nn::Linear(params, p + ".ff1", w, static_cast<std::size_t>(o.ffn), rng);
    blk.ff2 = nn::Linear(params, p + ".ff2", static_cast<std::size_t>(o.ffn), w, rng);
    blocks_.push_back(std::move(blk));
  }
  squash_ = nn::Linear(params, prefix + ".squash", w, w, rng);
  gate_ = nn::Linear(params, prefix + ".gate", td + cw, w, rng);
  hyper_bias_ = nn::Linear(params, prefix + ".hyper_bias", td + cw, w, rng);
  head_ = nn::Linear(params, prefix + ".head", w, 2, rng, 0.0);
}

Var Denoiser::Predict(const Var& y_t, const Tensor& cond, std::span<const int> t) const {
  const auto m = static_cast<std::size_t>(options_.m);
  const std::size_t batch = t.size();
  if (cond.rank() != 2 || cond.dim(1) != cond_width())
    throw UsageError("score_count_mismatch",
                     "condition width " + (cond.rank() == 2 ? std::to_string(cond.dim(1)) : std::string("?")) +
                         " does not match checkpoint width " + std::to_string(cond_width()));
  if (y_t->shape() != Shape{batch, 2 * m} || cond.dim(0) != batch)
    throw UsageError("dim_mismatch", "denoise: y_t " + ShapeString(y_t->shape()) + " for batch " +
                                         std::to_string(batch) + " and m=" + std::to_string(m));
  for (int s : t)
    if (s < 1) throw UsageError("bad_step", "denoise: t must be >= 1");

  std::vector<std::size_t> owner(batch * m), slot(batch * m);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < m; ++j) {
      owner[b * m + j] = b;
      slot[b * m + j] = j;
    }

  Var cond_v = ad::Constant(cond);
  Var temb = ad::Constant(TimeEmbedding(t, options_.time_dim));
  Var cproj = ad::LeakyRelu(cond_proj_(cond_v));
  Var steps = ad::Reshape(y_t, {batch * m, 2});
  Var x = token_in_(ad::Concat({steps, ad::GatherRows(temb, owner), ad::GatherRows(cproj, owner)}, 1));
  x = ad::Add(x, ad::GatherRows(position_, slot));

  const auto heads = static_cast<std::size_t>(options_.heads);
  const std::size_t dh = static_cast<std::size_t>(options_.width) / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const Block& blk : blocks_) {
    Var h = ad::LayerNorm(x);
    Var q = blk.q(h), k = blk.k(h), v = blk.v(h);
    std::vector<Var> outs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      auto split = [&](const Var& a) {
        return ad::Reshape(ad::Slice(a, 1, hd * dh, (hd + 1) * dh), {batch, m, dh});
      };
      Var att = ad::Softmax(ad::Scale(ad::BatchMatMul(split(q), ad::Transpose(split(k))), inv_sqrt));
      outs.push_back(ad::Reshape(ad::BatchMatMul(att, split(v)), {batch * m, dh}));
    }
    x = ad::Add(x, blk.o(heads == 1 ? outs[0] : ad::Concat(outs, 1)));
    x = ad::Add(x, blk.ff2(ad::LeakyRelu(blk.ff1(ad::LayerNorm(x)))));
  }

  Var ctx = ad::Concat({temb, cond_v}, 1);
  Var gate = ad::GatherRows(ad::Sigmoid(gate_(ctx)), owner);
  Var shift = ad::GatherRows(hyper_bias_(ctx), owner);
  Var y = ad::LeakyRelu(ad::Add(ad::Mul(squash_(ad::LayerNorm(x)), gate), shift));
  return ad::Reshape(head_(y), {batch, 2 * m});
}

Tensor MakeCondition(std::span<const double> feature, std::span<const double> scores) {
  std::vector<double> row(feature.begin(), feature.end());
  row.insert(row.end(), scores.begin(), scores.end());
  const std::size_t width = row.size();
  return Tensor({1, width}, std::move(row));
}

DiffusionTrainReport TrainDiffusion(const Denoiser& denoiser, nn::ParamSet& params,
                                    const Schedule& schedule, const Tensor& features,
                                    const Tensor& scores, const Tensor& futures,
                                    const DiffusionTrainConfig& config) {
  const auto start_time = std::chrono::steady_clock::now();
  const auto& o = denoiser.options();
  if (futures.rank() != 2 || futures.dim(1) != 2 * static_cast<std::size_t>(o.m))
    throw UsageError("dim_mismatch", "futures must be [N, 2m]");
  const std::size_t n = futures.dim(0);
  if (n == 0) throw DataError("empty_corpus", "no training trajectories");
  if (scores.rank() != 2 || scores.dim(0) != n)
    throw DataError("missing_scores", "every trajectory needs a score row");
  if (scores.dim(1) != static_cast<std::size_t>(o.score_count))
    throw UsageError("score_count_mismatch", "score columns " + std::to_string(scores.dim(1)) +
                                                 " vs denoiser " + std::to_string(o.score_count));
  if (features.rank() != 2 || features.dim(0) != n ||
      features.dim(1) != static_cast<std::size_t>(o.feature_dim))
    throw UsageError("dim_mismatch", "features must be [N, feature_dim]");
  if (config.batch_size < 1 || config.epochs < 0 || !(config.lr > 0))
    throw UsageError("bad_option", "diffusion training options out of range");

  const std::size_t width = futures.dim(1);
  const std::size_t fd = features.dim(1), sc = scores.dim(1);
  nn::Adam adam(params, {.lr = config.lr, .clip_norm = config.clip_norm});
  Rng rng = MakeRng(config.seed, {0xd1ff});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(config.batch_size);

  DiffusionTrainReport report;
  bool first = true;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(Uniform(rng, 0.0, 1.0) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      Tensor y_t({count, width}), eps({count, width}), cond({count, fd + sc});
      std::vector<int> t(count);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t idx = order[start + r];
        t[r] = 1 + static_cast<int>(std::min<double>(schedule.steps - 1,
                                                      Uniform(rng, 0.0, 1.0) * schedule.steps));
        const double ab = schedule.alpha_bar[static_cast<std::size_t>(t[r] - 1)];
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        for (std::size_t c = 0; c < width; ++c) {
          const double e = StandardNormal(rng);
          eps.at(r, c) = e;
          y_t.at(r, c) = a * futures.at(idx, c) + b * e;
        }
        for (std::size_t c = 0; c < fd; ++c) cond.at(r, c) = features.at(idx, c);
        for (std::size_t c = 0; c < sc; ++c) cond.at(r, fd + c) = scores.at(idx, c);
      }
      params.ZeroGrad();
      Var pred = denoiser.Predict(ad::Constant(std::move(y_t)), cond, t);
      Var loss = ad::Scale(ad::Sum(ad::Square(ad::Sub(pred, ad::Constant(std::move(eps))))),
                           1.0 / static_cast<double>(count));
      if (!std::isfinite(loss->value[0]))
        throw NumericalError("diverged", "diffusion loss is not finite at epoch " +
                                             std::to_string(epoch));
      if (first) {
        report.initial_loss = loss->value[0];
        first = false;
      }
      ad::Backward(loss);
      adam.Step();
      total += loss->value[0];
      ++batches;
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

SampleMode ParseSampleMode(const std::string& name) {
  if (name == "ancestral") return SampleMode::kAncestral;
  if (name == "paper-mean") return SampleMode::kPaperMean;
  throw UsageError("bad_mode", "unknown sample mode '" + name + "'");
}

std::string SampleModeName(SampleMode mode) {
  return mode == SampleMode::kAncestral ? "ancestral" : "paper-mean";
}

Tensor SampleFrom(const Denoiser& denoiser, const Schedule& schedule, const Tensor& cond,
                  Tensor y_T, SampleMode mode, std::span<Rng> rngs) {
  const std::size_t batch = y_T.dim(0);
  if (mode == SampleMode::kAncestral && rngs.size() != batch)
    throw UsageError("dim_mismatch", "need one rng per sampled row");
  ad::NoGradGuard guard;
  Tensor y = std::move(y_T);
  const std::size_t width = y.dim(1);
  std::vector<int> t(batch);
  for (int step = schedule.steps; step >= 1; --step) {
    std::fill(t.begin(), t.end(), step);
    const Tensor eps = denoiser.Predict(ad::Constant(y), cond, t)->value;
    const auto i = static_cast<std::size_t>(step - 1);
    const double coef = schedule.beta[i] / std::sqrt(1.0 - schedule.alpha_bar[i]);
    const double inv = 1.0 / std::sqrt(schedule.alpha[i]);
    const double sigma = std::sqrt(schedule.beta[i]);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        double v = (y.at(r, c) - coef * eps.at(r, c)) * inv;
        if (mode == SampleMode::kAncestral && step > 1) v += sigma * StandardNormal(rngs[r]);
        y.at(r, c) = v;
      }
  }
  if (!y.AllFinite()) throw NumericalError("non_finite", "sampled trajectory is not finite");
  return y;
}

Tensor Sample(const Denoiser& denoiser, const Schedule& schedule, const Tensor& cond,
              SampleMode mode, std::span<Rng> rngs) {
  const std::size_t batch = cond.dim(0);
  if (rngs.size() != batch) throw UsageError("dim_mismatch", "need one rng per sampled row");
  const std::size_t width = 2 * static_cast<std::size_t>(denoiser.options().m);
  Tensor y({batch, width});
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < width; ++c) y.at(r, c) = StandardNormal(rngs[r]);
  return SampleFrom(denoiser, schedule, cond, std::move(y), mode, rngs);
}

std::vector<double> ConditionGrid(int count) {
  if (count < 1) throw UsageError("bad_grid", "grid needs at least one value");
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = (i + 0.5) / count;
  return out;
}

}  // namespace ctd::diffusion
