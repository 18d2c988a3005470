#include "ctd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ctd/error.hpp"

namespace ctd {

using data::Corpus;
using data::Polyline;

namespace {

encoder::EncoderOptions EncoderOptionsFor(const Config& c, double scale) {
  return {.n = c.data.n,
          .dt = c.data.dt,
          .ego_hidden = c.encoder.ego_hidden,
          .edge_hidden = c.encoder.edge_hidden,
          .input_scale = scale};
}

void CheckCorpus(const Model& model, const Corpus& corpus) {
  if (corpus.meta.n != model.config.data.n || corpus.meta.m != model.config.data.m)
    throw DataError("dim_mismatch", "corpus n/m (" + std::to_string(corpus.meta.n) + "/" +
                                        std::to_string(corpus.meta.m) +
                                        ") do not match the model");
}

}  // namespace

scoring::ScoringModel Model::scoring() {
  return {&encoder, &encoder_params, &heads, &scorer_params, scale};
}

scoring::ScoringModel Model::scoring() const {
  auto& self = const_cast<Model&>(*this);
  return self.scoring();
}

Model CreateModel(const Config& config, std::vector<data::Constraint> constraints,
                  double scale) {
  ValidateConfig(config);
  if (constraints.empty()) throw UsageError("no_constraints", "model needs at least one constraint");
  if (!(scale > 0) || !std::isfinite(scale)) throw DataError("bad_scale", "normalization scale must be > 0");
  Model model;
  model.config = config;
  model.constraints = std::move(constraints);
  model.scale = scale;
  Rng rng = MakeRng(config.seed, {0xe4c0});
  model.encoder = encoder::Encoder(model.encoder_params, "encoder",
                                   EncoderOptionsFor(config, scale), rng);
  for (std::size_t k = 0; k < model.constraints.size(); ++k) {
    Rng head_rng = MakeRng(config.seed, {0x5c0, k});
    model.heads.emplace_back(model.scorer_params, "scorer." + std::to_string(k),
                             model.encoder.feature_dim(), config.data.m,
                             config.scorer.hidden, head_rng);
  }
  const auto& d = config.diffusion;
  model.schedule = diffusion::MakeSchedule(d.steps, d.beta_start, d.beta_end,
                                           diffusion::ParseScheduleKind(d.schedule));
  return model;
}

void AddDenoiser(Model& model) {
  const auto& d = model.config.diffusion;
  diffusion::DenoiserOptions opts{.m = model.config.data.m,
                                  .feature_dim = static_cast<int>(model.encoder.feature_dim()),
                                  .score_count = static_cast<int>(model.score_count()),
                                  .width = d.width,
                                  .heads = d.heads,
                                  .depth = d.depth,
                                  .ffn = d.ffn,
                                  .time_dim = d.time_dim,
                                  .cond_dim = d.cond_dim};
  model.denoiser_params = nn::ParamSet();
  Rng rng = MakeRng(model.config.seed, {0xde0});
  model.denoiser = diffusion::Denoiser(model.denoiser_params, "denoiser", opts, rng);
  model.has_denoiser = true;
}

Checkpoint ToCheckpoint(const Model& model) {
  Checkpoint ckpt;
  std::vector<std::string> names;
  for (auto c : model.constraints) names.push_back(data::ConstraintName(c));
  ckpt.meta = {{"n", model.config.data.n},
               {"m", model.config.data.m},
               {"dt", model.config.data.dt},
               {"scale", model.scale},
               {"score_count", model.score_count()},
               {"constraints", names},
               {"frame", "ego-relative"},
               {"has_denoiser", model.has_denoiser},
               {"feature_dim", model.encoder.feature_dim()},
               {"config", ConfigToJson(model.config)}};
  auto add = [&](const nn::ParamSet& ps) {
    for (const auto& [name, v] : ps.entries()) ckpt.entries.push_back({name, v->value});
  };
  add(model.encoder_params);
  add(model.scorer_params);
  if (model.has_denoiser) add(model.denoiser_params);
  return ckpt;
}

Model FromCheckpoint(const Checkpoint& ckpt) {
  const auto& meta = ckpt.meta;
  Config config;
  std::vector<data::Constraint> constraints;
  double scale = 0;
  bool has_denoiser = false;
  try {
    if (meta.at("frame").get<std::string>() != "ego-relative")
      throw DataError("bad_checkpoint", "unsupported coordinate frame");
    config = ConfigFromJson(meta.at("config"));
    for (const auto& name : meta.at("constraints")) constraints.push_back(data::ParseConstraint(name.get<std::string>()));
    scale = meta.at("scale").get<double>();
    has_denoiser = meta.at("has_denoiser").get<bool>();
    if (meta.at("score_count").get<std::size_t>() != constraints.size())
      throw DataError("bad_checkpoint", "score_count disagrees with constraint names");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad_checkpoint", std::string("metadata: ") + e.what());
  }
  Model model = CreateModel(config, std::move(constraints), scale);
  if (has_denoiser) AddDenoiser(model);

  std::size_t expected = 0;
  auto load = [&](nn::ParamSet& ps) {
    for (const auto& [name, v] : ps.entries()) {
      const CheckpointEntry* e = ckpt.Find(name);
      if (!e) throw DataError("bad_checkpoint", "missing parameter " + name);
      if (e->value.shape() != v->shape())
        throw DataError("bad_checkpoint", name + ": shape " + ShapeString(e->value.shape()) +
                                              " vs expected " + ShapeString(v->shape()));
      v->value = e->value;
      ++expected;
    }
  };
  load(model.encoder_params);
  load(model.scorer_params);
  if (has_denoiser) load(model.denoiser_params);
  if (expected != ckpt.entries.size())
    throw DataError("bad_checkpoint", "checkpoint holds parameters the model does not use");
  return model;
}

void SaveModel(const std::string& path, const Model& model) {
  SaveCheckpoint(path, ToCheckpoint(model));
}

Model LoadModel(const std::string& path) { return FromCheckpoint(LoadCheckpoint(path)); }

double FutureScale(const Corpus& corpus) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : corpus.trajectories) {
    const data::Vec2 o = t.history.back();
    for (const auto& p : t.future) {
      sum += (p.x - o.x) * (p.x - o.x) + (p.y - o.y) * (p.y - o.y);
      count += 2;
    }
  }
  if (count == 0) throw DataError("empty_corpus", "cannot compute scale of an empty corpus");
  const double s = std::sqrt(sum / static_cast<double>(count));
  if (!(s > 0)) throw DataError("bad_scale", "all futures coincide with the last history point");
  return s;
}

Tensor EncodeCorpus(const Model& model, const Corpus& corpus) {
  CheckCorpus(model, corpus);
  ad::NoGradGuard guard;
  const std::size_t n = corpus.trajectories.size();
  const std::size_t d = model.encoder.feature_dim();
  Tensor out({std::max<std::size_t>(n, 1), d});
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t end = std::min(n, start + kChunk);
    std::vector<Polyline> hist;
    std::vector<std::vector<Polyline>> nbs;
    for (std::size_t i = start; i < end; ++i) {
      hist.push_back(corpus.trajectories[i].history);
      nbs.push_back(corpus.trajectories[i].neighbors);
    }
    const Tensor f = model.encoder.Encode(hist, nbs)->value;
    std::copy(f.vec().begin(), f.vec().end(), out.vec().begin() + start * d);
  }
  return out;
}

Tensor FutureMatrix(const Model& model, const Corpus& corpus) {
  CheckCorpus(model, corpus);
  const std::size_t n = corpus.trajectories.size();
  const std::size_t w = 2 * static_cast<std::size_t>(corpus.meta.m);
  Tensor out({std::max<std::size_t>(n, 1), w});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = corpus.trajectories[i];
    const auto flat = scoring::FlattenFuture(t.future, t.history, model.scale);
    std::copy(flat.begin(), flat.end(), out.vec().begin() + i * w);
  }
  return out;
}

scoring::ScoreTrainReport TrainScorers(Model& model, std::span<const data::PairSet> train,
                                       std::span<const data::PairSet> heldout) {
  const auto& s = model.config.scorer;
  const scoring::ScoreTrainConfig tc{.lambda = s.lambda,
                                     .grid_size = s.grid_size,
                                     .bandwidth = s.bandwidth,
                                     .normalize_entropy = s.normalize_entropy,
                                     .epochs = s.epochs,
                                     .batch_size = s.batch_size,
                                     .lr = s.lr,
                                     .seed = DeriveSeed(model.config.seed, {0x7a1}),
                                     .freeze_encoder = s.freeze_encoder,
                                     .holdout_fraction = s.holdout_fraction};
  return scoring::TrainScorer(model.scoring(), train, heldout, tc);
}

diffusion::DiffusionTrainReport TrainDenoiser(Model& model, const Corpus& corpus,
                                              const std::vector<std::vector<double>>& scores) {
  CheckCorpus(model, corpus);
  const std::size_t n = corpus.trajectories.size();
  if (n == 0) throw DataError("empty_corpus", "no trajectories to train on");
  if (scores.size() != n) throw DataError("missing_scores", "every trajectory needs a score");
  const std::size_t k = model.score_count();
  Tensor score_t({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    if (scores[i].size() != k)
      throw UsageError("score_count_mismatch", "trajectory " + std::to_string(corpus.trajectories[i].id) +
                                                   " has " + std::to_string(scores[i].size()) +
                                                   " scores, model expects " + std::to_string(k));
    for (std::size_t j = 0; j < k; ++j) {
      if (!(scores[i][j] >= 0 && scores[i][j] <= 1))
        throw DataError("bad_score", "scores must lie in [0, 1]");
      score_t.at(i, j) = scores[i][j];
    }
  }
  AddDenoiser(model);
  const auto& d = model.config.diffusion;
  diffusion::DiffusionTrainConfig tc{.epochs = d.epochs,
                                     .batch_size = d.batch_size,
                                     .lr = d.lr,
                                     .clip_norm = d.clip_norm,
                                     .seed = DeriveSeed(model.config.seed, {0xd1f})};
  return diffusion::TrainDiffusion(model.denoiser, model.denoiser_params, model.schedule,
                                   EncodeCorpus(model, corpus), score_t,
                                   FutureMatrix(model, corpus), tc);
}

std::vector<Polyline> SampleFutures(const Model& model, std::span<const SampleRequest> requests,
                                    diffusion::SampleMode mode) {
  if (!model.has_denoiser) throw UsageError("no_denoiser", "checkpoint has no trained denoiser");
  const std::size_t k = model.score_count();
  const std::size_t fd = model.encoder.feature_dim();
  const auto m = static_cast<std::size_t>(model.config.data.m);
  std::vector<Polyline> out(requests.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < requests.size(); start += kChunk) {
    const std::size_t end = std::min(requests.size(), start + kChunk);
    const std::size_t count = end - start;
    std::vector<Polyline> hist;
    std::vector<std::vector<Polyline>> nbs;
    for (std::size_t i = start; i < end; ++i) {
      const auto& r = requests[i];
      if (!r.trajectory) throw UsageError("bad_request", "sample request without a history");
      if (r.scores.size() != k)
        throw UsageError("score_count_mismatch",
                         "score count mismatch: got " + std::to_string(r.scores.size()) +
                             ", checkpoint has " + std::to_string(k));
      for (double c : r.scores)
        if (!(c >= 0 && c <= 1)) throw UsageError("bad_score", "c must lie in [0, 1]");
      hist.push_back(r.trajectory->history);
      nbs.push_back(r.trajectory->neighbors);
    }
    Tensor features;
    {
      ad::NoGradGuard guard;
      features = model.encoder.Encode(hist, nbs)->value;
    }
    Tensor cond({count, fd + k});
    std::vector<Rng> rngs;
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t c = 0; c < fd; ++c) cond.at(r, c) = features.at(r, c);
      for (std::size_t c = 0; c < k; ++c) cond.at(r, fd + c) = requests[start + r].scores[c];
      rngs.push_back(Rng(requests[start + r].seed));
    }
    const Tensor y = diffusion::Sample(model.denoiser, model.schedule, cond, mode, rngs);
    for (std::size_t r = 0; r < count; ++r) {
      const data::Vec2 o = hist[r].back();
      Polyline fut(m);
      for (std::size_t j = 0; j < m; ++j)
        fut[j] = {o.x + y.at(r, 2 * j) * model.scale, o.y + y.at(r, 2 * j + 1) * model.scale};
      out[start + r] = std::move(fut);
    }
  }
  return out;
}

namespace {

std::vector<Prediction> Run(const Model& model, const data::Trajectory& t,
                            const std::vector<std::vector<double>>& conds, int n_s,
                            std::uint64_t seed, diffusion::SampleMode mode) {
  std::vector<SampleRequest> reqs;
  std::vector<Prediction> preds;
  for (std::size_t ci = 0; ci < conds.size(); ++ci)
    for (int d = 0; d < n_s; ++d) {
      reqs.push_back({&t, conds[ci],
                      DeriveSeed(seed, {static_cast<std::uint64_t>(t.id), ci,
                                        static_cast<std::uint64_t>(d)})});
      preds.push_back({t.id, conds[ci], d, {}});
    }
  auto futures = SampleFutures(model, reqs, mode);
  for (std::size_t i = 0; i < preds.size(); ++i) preds[i].future = std::move(futures[i]);
  return preds;
}

}  // namespace

std::vector<Prediction> PredictBestOf(const Model& model, const data::Trajectory& trajectory,
                                      int n_c, int n_s, std::uint64_t seed,
                                      diffusion::SampleMode mode) {
  if (n_c < 1 || n_s < 1) throw UsageError("bad_option", "N_c and N_s must be >= 1");
  std::vector<std::vector<double>> conds;
  for (double c : diffusion::ConditionGrid(n_c)) conds.emplace_back(model.score_count(), c);
  return Run(model, trajectory, conds, n_s, seed, mode);
}

std::vector<Prediction> PredictAt(const Model& model, const data::Trajectory& trajectory,
                                  const std::vector<double>& scores, int n_s,
                                  std::uint64_t seed, diffusion::SampleMode mode) {
  if (n_s < 1) throw UsageError("bad_option", "N_s must be >= 1");
  return Run(model, trajectory, {scores}, n_s, seed, mode);
}

void WriteScoresCsv(const std::string& path, const Corpus& corpus,
                    const std::vector<data::Constraint>& constraints,
                    const std::vector<std::vector<double>>& scores) {
  std::ofstream os(path);
  if (!os) throw DataError("io", "cannot write " + path);
  os.precision(17);
  os << "id";
  for (auto c : constraints) os << ',' << data::ConstraintName(c);
  os << '\n';
  for (std::size_t i = 0; i < corpus.trajectories.size(); ++i) {
    os << corpus.trajectories[i].id;
    for (double v : scores.at(i)) os << ',' << v;
    os << '\n';
  }
}

std::vector<std::vector<double>> ReadScoresCsv(const std::string& path, const Corpus& corpus,
                                               const std::vector<data::Constraint>& constraints) {
  std::ifstream is(path);
  if (!is) throw DataError("io", "cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError("bad_scores", path + ": empty file");
  std::string expected = "id";
  for (auto c : constraints) expected += "," + data::ConstraintName(c);
  if (line != expected)
    throw UsageError("score_count_mismatch", path + ": header '" + line + "' does not match '" +
                                                 expected + "'");
  std::unordered_map<std::int64_t, std::vector<double>> by_id;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != constraints.size() + 1)
      throw DataError("bad_scores", path + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(constraints.size() + 1) + " columns");
    try {
      std::vector<double> row;
      for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(std::stod(cells[j]));
      by_id[std::stoll(cells[0])] = std::move(row);
    } catch (const std::exception&) {
      throw DataError("bad_scores", path + ":" + std::to_string(line_no) + ": not a number");
    }
  }
  std::vector<std::vector<double>> out;
  for (const auto& t : corpus.trajectories) {
    auto it = by_id.find(t.id);
    if (it == by_id.end())
      throw DataError("missing_scores", "no score for trajectory " + std::to_string(t.id));
    out.push_back(it->second);
  }
  return out;
}

void WritePredictionsCsv(const std::string& path, const Model& model,
                         std::span<const Prediction> predictions) {
  std::ofstream os(path);
  if (!os) throw DataError("io", "cannot write " + path);
  os.precision(10);
  os << "history_id";
  for (auto c : model.constraints) os << ",c_" << data::ConstraintName(c);
  os << ",draw";
  for (int j = 1; j <= model.config.data.m; ++j) os << ",x" << j << ",y" << j;
  os << '\n';
  for (const auto& p : predictions) {
    os << p.history_id;
    for (double c : p.scores) os << ',' << c;
    os << ',' << p.draw;
    for (const auto& v : p.future) os << ',' << v.x << ',' << v.y;
    os << '\n';
  }
}

}  // namespace ctd
