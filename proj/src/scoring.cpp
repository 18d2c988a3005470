#include "ctd/scoring.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ctd/error.hpp"

namespace ctd::scoring {

using ad::Var;
using data::PairSet;
using data::Polyline;

ScorerHead::ScorerHead(nn::ParamSet& params, const std::string& prefix,
                       std::size_t feature_dim, int m,
                       const std::vector<int>& hidden, Rng& rng)
    : input_dim_(feature_dim + 2 * static_cast<std::size_t>(m)), m_(m) {
  std::size_t in = input_dim_;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] < 1) throw UsageError("bad_option", "scorer hidden sizes must be positive");
    const auto out = static_cast<std::size_t>(hidden[i]);
    layers_.emplace_back(params, prefix + ".fc" + std::to_string(i), in, out, rng);
    in = out;
  }
  layers_.emplace_back(params, prefix + ".out", in, 1, rng);
}

Var ScorerHead::Score(const Var& features, const Tensor& futures) const {
  if (futures.rank() != 2 || futures.dim(1) != 2 * static_cast<std::size_t>(m_) ||
      features->shape()[0] != futures.dim(0) ||
      features->shape()[1] + futures.dim(1) != input_dim_)
    throw UsageError("dim_mismatch", "score: feature/future dims " +
                                         ShapeString(features->shape()) + " + " +
                                         ShapeString(futures.shape()) +
                                         " do not match scorer input " +
                                         std::to_string(input_dim_));
  Var x = ad::Concat({features, ad::Constant(futures)}, 1);
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = ad::LeakyRelu(layers_[i](x));
  return ad::Sigmoid(layers_.back()(x));
}

std::vector<double> FlattenFuture(const Polyline& future, const Polyline& history,
                                  double scale) {
  const data::Vec2 o = history.back();
  std::vector<double> out;
  out.reserve(2 * future.size());
  for (const data::Vec2& p : future) {
    out.push_back((p.x - o.x) / scale);
    out.push_back((p.y - o.y) / scale);
  }
  return out;
}

double BtlProb(double s_a, double s_b) {
  // p for the larger score, 1 - p for the other; p >= 0.5 makes 1 - p exact,
  // so the two orders always sum to one
  const double d = s_a - s_b;
  const double p = 1.0 / (1.0 + std::exp(-std::abs(d)));
  return d >= 0 ? p : 1.0 - p;
}

Var MleLoss(const Var& scores_a, const Var& scores_b, std::span<const int> labels) {
  const std::size_t batch = labels.size();
  if (batch == 0) throw UsageError("empty_batch", "mle_loss: empty batch");
  if (scores_a->value.size() != batch || scores_b->value.size() != batch)
    throw UsageError("dim_mismatch", "mle_loss: score and label counts differ");
  Tensor sign(scores_a->shape());
  for (std::size_t i = 0; i < batch; ++i) sign[i] = labels[i] == 0 ? 1.0 : -1.0;
  // winner - loser
  Var margin = ad::Mul(ad::Sub(scores_a, scores_b), ad::Constant(std::move(sign)));
  return ad::Scale(ad::Sum(ad::Log(ad::Sigmoid(margin))), -1.0);
}

Var EntropyPenalty(const Var& scores, int grid_size, double bandwidth, bool normalize) {
  if (grid_size < 2) throw UsageError("bad_grid", "entropy_penalty: K must be >= 2");
  if (!(bandwidth > 0)) throw UsageError("bad_bandwidth", "entropy_penalty: bandwidth must be > 0");
  const std::size_t count = scores->value.size();
  if (count < 2) throw UsageError("empty_batch", "entropy_penalty: need at least two scores");
  const auto k = static_cast<std::size_t>(grid_size);

  // [K, count] matrix of (grid_i - s_j)
  Var row = ad::Reshape(scores, {1, count});
  Var tiled = ad::GatherRows(row, std::vector<std::size_t>(k, 0));
  Tensor grid({k, count});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < count; ++j)
      grid.at(i, j) = static_cast<double>(i + 1) / static_cast<double>(grid_size);
  Var diff = ad::Sub(ad::Constant(std::move(grid)), tiled);
  Var kernel = ad::Exp(ad::Scale(ad::Square(diff), -0.5 / (bandwidth * bandwidth)));

  // KDE density at each grid point
  const double norm = 1.0 / (static_cast<double>(count) * bandwidth * std::sqrt(2.0 * M_PI));
  Var density = ad::Scale(
      ad::MatMul(kernel, ad::Constant(Tensor::Filled({count, 1}, 1.0))), norm);
  // keeps log finite where the density underflows
  density = ad::AddScalar(density, 1e-12);
  Var plogp = ad::Sum(ad::Mul(density, ad::Log(density)));
  if (!normalize) return ad::Scale(plogp, -1.0);
  // H(p / Z) = log Z - sum(p log p) / Z
  Var z = ad::Sum(density);
  return ad::Sub(ad::Log(z), ad::Div(plogp, z));
}

namespace {

struct Batch {
  std::vector<Polyline> histories;
  std::vector<std::vector<Polyline>> neighbors;
  Tensor futures_a, futures_b;
  std::vector<int> labels;
};

Batch MakeBatch(const PairSet& set, std::span<const std::size_t> idx, double scale) {
  Batch b;
  const std::size_t w = 2 * static_cast<std::size_t>(set.m);
  b.futures_a = Tensor({idx.size(), w});
  b.futures_b = Tensor({idx.size(), w});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const data::PairwiseSample& p = set.pairs[idx[r]];
    b.histories.push_back(p.history);
    b.neighbors.push_back(p.neighbors);
    const auto fa = FlattenFuture(p.future_a, p.history, scale);
    const auto fb = FlattenFuture(p.future_b, p.history, scale);
    std::copy(fa.begin(), fa.end(), b.futures_a.vec().begin() + r * w);
    std::copy(fb.begin(), fb.end(), b.futures_b.vec().begin() + r * w);
    b.labels.push_back(p.label);
  }
  return b;
}

void Shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(Uniform(rng, 0.0, 1.0) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

void CheckModel(const ScoringModel& model) {
  if (!model.encoder || !model.encoder_params || !model.heads || !model.head_params)
    throw UsageError("bad_model", "scoring model is incomplete");
}

}  // namespace

std::vector<std::pair<double, double>> ScorePairs(const ScoringModel& model,
                                                  std::size_t head,
                                                  const PairSet& pairs) {
  CheckModel(model);
  ad::NoGradGuard guard;
  std::vector<std::pair<double, double>> out;
  const ScorerHead& h = model.heads->at(head);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < pairs.pairs.size(); start += kChunk) {
    const std::size_t end = std::min(pairs.pairs.size(), start + kChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch b = MakeBatch(pairs, idx, model.scale);
    Var f = model.encoder->Encode(b.histories, b.neighbors);
    Var sa = h.Score(f, b.futures_a);
    Var sb = h.Score(f, b.futures_b);
    for (std::size_t i = 0; i < idx.size(); ++i) out.emplace_back(sa->value[i], sb->value[i]);
  }
  return out;
}

double PairAccuracy(const std::vector<std::pair<double, double>>& scores,
                    const PairSet& pairs) {
  if (scores.empty()) return 0.0;
  std::size_t right = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool a_wins = scores[i].first > scores[i].second;
    if ((pairs.pairs[i].label == 0) == a_wins) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(scores.size());
}

ScoreTrainReport TrainScorer(const ScoringModel& model, std::span<const PairSet> train,
                             std::span<const PairSet> heldout,
                             const ScoreTrainConfig& config) {
  CheckModel(model);
  const auto start_time = std::chrono::steady_clock::now();
  const std::size_t heads = model.heads->size();
  if (train.size() != heads)
    throw UsageError("head_count", "need one pair set per scorer head");
  if (!heldout.empty() && heldout.size() != heads)
    throw UsageError("head_count", "need one held-out pair set per scorer head");
  if (config.batch_size < 1 || config.epochs < 0 || !(config.lr > 0) || config.lambda < 0)
    throw UsageError("bad_option", "scorer training options out of range");

  Rng rng = MakeRng(config.seed, {0x5c0e});
  std::vector<PairSet> fit(heads), eval(heads);
  for (std::size_t k = 0; k < heads; ++k) {
    if (train[k].pairs.empty())
      throw DataError("no_pairs", "no training pairs for head " + std::to_string(k));
    if (!heldout.empty()) {
      fit[k] = train[k];
      eval[k] = heldout[k];
      continue;
    }
    std::vector<std::size_t> order(train[k].pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Shuffle(order, rng);
    const auto n_eval = static_cast<std::size_t>(
        std::floor(config.holdout_fraction * static_cast<double>(order.size())));
    fit[k] = train[k];
    eval[k] = train[k];
    fit[k].pairs.clear();
    eval[k].pairs.clear();
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_eval ? eval[k] : fit[k]).pairs.push_back(train[k].pairs[order[i]]);
    if (fit[k].pairs.empty()) fit[k] = train[k];
  }

  nn::ParamSet trainable;
  if (!config.freeze_encoder)
    for (const auto& [name, v] : model.encoder_params->entries()) trainable.Adopt(name, v);
  for (const auto& [name, v] : model.head_params->entries()) trainable.Adopt(name, v);
  nn::Adam adam(trainable, {.lr = config.lr});

  std::size_t max_pairs = 0;
  for (const auto& f : fit) max_pairs = std::max(max_pairs, f.pairs.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (max_pairs + bs - 1) / bs;

  ScoreTrainReport report;
  std::vector<std::vector<std::size_t>> orders(heads);
  for (std::size_t k = 0; k < heads; ++k) {
    orders[k].resize(fit[k].pairs.size());
    std::iota(orders[k].begin(), orders[k].end(), 0);
  }
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (auto& o : orders) Shuffle(o, rng);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      trainable.ZeroGrad();
      Var total;
      for (std::size_t k = 0; k < heads; ++k) {
        const auto& o = orders[k];
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < bs && i < o.size(); ++i)
          idx.push_back(o[(step * bs + i) % o.size()]);
        Batch b = MakeBatch(fit[k], idx, model.scale);
        Var f;
        if (config.freeze_encoder) {
          ad::NoGradGuard guard;
          f = model.encoder->Encode(b.histories, b.neighbors);
        } else {
          f = model.encoder->Encode(b.histories, b.neighbors);
        }
        const ScorerHead& h = (*model.heads)[k];
        Var sa = h.Score(f, b.futures_a);
        Var sb = h.Score(f, b.futures_b);
        Var loss = MleLoss(sa, sb, b.labels);
        if (config.lambda > 0 && idx.size() >= 1) {
          Var all = ad::Concat({sa, sb}, 0);
          Var ent = EntropyPenalty(all, config.grid_size, config.bandwidth,
                                   config.normalize_entropy);
          loss = ad::Sub(loss, ad::Scale(ent, config.lambda));
        }
        total = total ? ad::Add(total, loss) : loss;
      }
      if (!std::isfinite(total->value[0]))
        throw NumericalError("diverged", "scorer loss is not finite at epoch " +
                                             std::to_string(epoch));
      ad::Backward(total);
      adam.Step();
      epoch_loss += total->value[0];
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
  }

  for (std::size_t k = 0; k < heads; ++k) {
    HeadReport hr;
    hr.constraint = data::ConstraintName(fit[k].constraint);
    hr.train_pairs = fit[k].pairs.size();
    hr.heldout_pairs = eval[k].pairs.size();
    hr.histogram.assign(10, 0);
    if (!eval[k].pairs.empty()) {
      const auto scores = ScorePairs(model, k, eval[k]);
      hr.heldout_accuracy = PairAccuracy(scores, eval[k]);
      std::vector<double> all;
      for (const auto& [a, b] : scores) {
        all.push_back(a);
        all.push_back(b);
      }
      double mean = 0.0;
      for (double s : all) mean += s;
      mean /= static_cast<double>(all.size());
      double var = 0.0;
      for (double s : all) var += (s - mean) * (s - mean);
      hr.heldout_score_mean = mean;
      hr.heldout_score_std = std::sqrt(var / static_cast<double>(all.size()));
      for (double s : all) hr.histogram[std::min<std::size_t>(9, static_cast<std::size_t>(s * 10))]++;
    }
    report.heads.push_back(std::move(hr));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

std::vector<std::vector<double>> ScoreCorpus(const ScoringModel& model,
                                             const data::Corpus& corpus) {
  CheckModel(model);
  ad::NoGradGuard guard;
  const std::size_t heads = model.heads->size();
  const std::size_t n = corpus.trajectories.size();
  std::vector<std::vector<double>> out(n, std::vector<double>(heads));
  constexpr std::size_t kChunk = 256;
  const std::size_t w = 2 * static_cast<std::size_t>(corpus.meta.m);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t end = std::min(n, start + kChunk);
    std::vector<Polyline> hist;
    std::vector<std::vector<Polyline>> nbs;
    Tensor fut({end - start, w});
    for (std::size_t i = start; i < end; ++i) {
      const auto& t = corpus.trajectories[i];
      hist.push_back(t.history);
      nbs.push_back(t.neighbors);
      const auto flat = FlattenFuture(t.future, t.history, model.scale);
      std::copy(flat.begin(), flat.end(), fut.vec().begin() + (i - start) * w);
    }
    Var f = model.encoder->Encode(hist, nbs);
    for (std::size_t k = 0; k < heads; ++k) {
      Var s = (*model.heads)[k].Score(f, fut);
      for (std::size_t i = start; i < end; ++i) out[i][k] = s->value[i - start];
    }
  }
  return out;
}

double ScoreOne(const ScoringModel& model, std::size_t head, const Polyline& history,
                const std::vector<Polyline>& neighbors, const Polyline& future) {
  CheckModel(model);
  ad::NoGradGuard guard;
  const Polyline h[1] = {history};
  const std::vector<Polyline> nb[1] = {neighbors};
  Var f = model.encoder->Encode(h, nb);
  const auto flat = FlattenFuture(future, history, model.scale);
  Tensor fut({1, flat.size()}, flat);
  return model.heads->at(head).Score(f, fut)->value[0];
}

}  // namespace ctd::scoring
