// ctd: command-line pipeline for constraint-steered trajectory diffusion.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctd/config.hpp"
#include "ctd/data.hpp"
#include "ctd/error.hpp"
#include "ctd/eval.hpp"
#include "ctd/pipeline.hpp"
#include "ctd/svg.hpp"
#include "json.hpp"

namespace {

using namespace ctd;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config_path;
};

Config LoadConfigWith(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : LoadConfig(g.config_path);
  if (g.seed_set) c.seed = g.seed;
  return c;
}

data::Corpus SelectSplit(const data::Corpus& corpus, const std::string& split, double fraction) {
  if (split == "all") return corpus;
  if (split != "train" && split != "test")
    throw UsageError("bad_split", "split must be train, test or all");
  return data::SplitCorpus(corpus, fraction, split == "test");
}

const data::Trajectory& FindTrajectory(const data::Corpus& corpus, std::int64_t id) {
  for (const auto& t : corpus.trajectories)
    if (t.id == id) return t;
  throw DataError("unknown_id", "no trajectory with id " + std::to_string(id));
}

void WriteJson(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("io", "cannot write " + path);
  os << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constraint-steered trajectory diffusion"};
  app.require_subcommand(1);
  // globals may also follow the subcommand
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Global RNG seed (overrides the config seed)")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);

  // gen-data
  std::string scenario = "t-intersection", out;
  std::size_t count = 1000;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--scenario", scenario)->check(CLI::IsMember({"t-intersection", "straight-hall"}));
  gen->add_option("--count", count)->check(CLI::PositiveNumber);
  gen->add_option("--out", out)->required();
  gen->callback([&] {
    const Config c = LoadConfigWith(g);
    data::SyntheticOptions o;
    o.scenario = scenario;
    o.count = count;
    o.seed = c.seed;
    o.n = c.data.n;
    o.m = c.data.m;
    o.dt = c.data.dt;
    o.jitter_sigma = c.data.jitter_sigma;
    const auto corpus = data::GenerateSynthetic(o);
    data::SaveCorpus(out, corpus);
    std::printf("wrote %zu trajectories to %s\n", corpus.trajectories.size(), out.c_str());
  });

  // import-ethucy
  std::string input, scene;
  double frame_rate = 0;
  auto* imp = app.add_subcommand("import-ethucy", "Import ETH/UCY annotation files");
  imp->add_option("--input", input, "File or directory of frame/ped/x/y text files")->required();
  imp->add_option("--scene", scene, "Scene name (directory files must contain it)")->required();
  imp->add_option("--frame-rate", frame_rate, "Source frames per second");
  imp->add_option("--out", out)->required();
  imp->callback([&] {
    const Config c = LoadConfigWith(g);
    data::ImportOptions o;
    o.n = c.data.n;
    o.m = c.data.m;
    o.dt = c.data.dt;
    o.frame_rate = frame_rate > 0 ? frame_rate : c.data.frame_rate;
    o.neighbor_radius = c.data.neighbor_radius;
    o.max_neighbors = c.data.max_neighbors;
    o.v_max = c.data.v_max;
    data::ImportReport rep;
    const auto corpus = data::ImportEthUcy(input, scene, o, &rep);
    data::SaveCorpus(out, corpus);
    std::printf("files=%zu lines=%zu tracks=%zu segments=%zu skipped_short=%zu skipped_speed=%zu\n",
                rep.files, rep.lines, rep.tracks, rep.segments, rep.skipped_short, rep.skipped_speed);
  });

  // make-pairs
  std::string corpus_path, constraint = "slow-down", split = "train";
  double fraction = 0;
  int per_history = 0;
  auto* mp = app.add_subcommand("make-pairs", "Label candidate future pairs with an annotator");
  mp->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  mp->add_option("--constraint", constraint)->check(CLI::IsMember({"slow-down", "turn-right", "turn-left"}));
  mp->add_option("--fraction", fraction, "Fraction of histories to draw pairs from");
  mp->add_option("--pairs-per-history", per_history);
  mp->add_option("--split", split)->check(CLI::IsMember({"train", "test", "all"}));
  mp->add_option("--out", out)->required();
  mp->callback([&] {
    const Config c = LoadConfigWith(g);
    const auto corpus = SelectSplit(data::LoadCorpus(corpus_path), split, c.data.test_fraction);
    const auto kind = data::ParseConstraint(constraint);
    data::ConstraintAnnotator ann{kind, kind == data::Constraint::kSlowDown ? c.data.slow_down_tie
                                                                            : c.data.turn_tie};
    data::PairOptions o;
    o.fraction = fraction > 0 ? fraction : c.data.pair_fraction;
    o.pairs_per_history = per_history > 0 ? per_history : c.data.pairs_per_history;
    o.seed = c.seed;
    data::PairReport rep;
    const auto pairs = data::MakePairs(corpus, ann, o, &rep);
    data::SavePairs(out, pairs);
    std::printf("pairs=%zu histories=%zu attempted=%zu skipped_ties=%zu\n", pairs.pairs.size(),
                rep.histories, rep.attempted, rep.skipped_ties);
  });

  // train-score
  std::vector<std::string> pair_paths;
  std::string report_path;
  auto* ts = app.add_subcommand("train-score", "Train the encoder and one scorer head per pair file");
  ts->add_option("--corpus", corpus_path, "Corpus used for the normalization scale")->required()->check(CLI::ExistingFile);
  ts->add_option("--pairs", pair_paths, "Pair files, one per constraint")->required()->check(CLI::ExistingFile);
  ts->add_option("--report", report_path, "JSON training report");
  ts->add_option("--out", out)->required();
  ts->callback([&] {
    const Config c = LoadConfigWith(g);
    const auto corpus = SelectSplit(data::LoadCorpus(corpus_path), "train", c.data.test_fraction);
    std::vector<data::PairSet> sets;
    std::vector<data::Constraint> constraints;
    for (const auto& p : pair_paths) {
      sets.push_back(data::LoadPairs(p));
      if (sets.back().n != c.data.n || sets.back().m != c.data.m)
        throw DataError("dim_mismatch", p + ": n/m do not match the config");
      constraints.push_back(sets.back().constraint);
    }
    Model model = CreateModel(c, constraints, FutureScale(corpus));
    const auto rep = TrainScorers(model, sets);
    SaveModel(out, model);
    nlohmann::json j{{"epoch_loss", rep.epoch_loss}, {"seconds", rep.seconds}};
    for (const auto& h : rep.heads) {
      j["heads"].push_back({{"constraint", h.constraint},
                            {"train_pairs", h.train_pairs},
                            {"heldout_pairs", h.heldout_pairs},
                            {"heldout_accuracy", h.heldout_accuracy},
                            {"heldout_score_mean", h.heldout_score_mean},
                            {"heldout_score_std", h.heldout_score_std},
                            {"histogram", h.histogram}});
      std::printf("%s: train_pairs=%zu heldout_pairs=%zu heldout_accuracy=%.4f score_std=%.4f\n",
                  h.constraint.c_str(), h.train_pairs, h.heldout_pairs, h.heldout_accuracy,
                  h.heldout_score_std);
    }
    if (!report_path.empty()) WriteJson(report_path, j);
  });

  // score-corpus
  std::string ckpt_path;
  auto* sc = app.add_subcommand("score-corpus", "Score every trajectory with the trained heads");
  sc->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  sc->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  sc->add_option("--out", out)->required();
  sc->callback([&] {
    const Model model = LoadModel(ckpt_path);
    const auto corpus = data::LoadCorpus(corpus_path);
    WriteScoresCsv(out, corpus, model.constraints, scoring::ScoreCorpus(model.scoring(), corpus));
    std::printf("scored %zu trajectories\n", corpus.trajectories.size());
  });

  // train-diffusion
  std::string scores_path;
  auto* td = app.add_subcommand("train-diffusion", "Train the conditional denoiser on a scored corpus");
  td->add_option("--checkpoint", ckpt_path, "Scorer checkpoint")->required()->check(CLI::ExistingFile);
  td->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  td->add_option("--scores", scores_path)->required()->check(CLI::ExistingFile);
  td->add_option("--report", report_path, "JSON training report");
  td->add_option("--out", out)->required();
  td->callback([&] {
    Model model = LoadModel(ckpt_path);
    if (!g.config_path.empty() || g.seed_set) {
      const Config c = LoadConfigWith(g);
      model.config.diffusion = c.diffusion;
      model.config.eval = c.eval;
      model.config.seed = c.seed;
      const auto& d = c.diffusion;
      model.schedule = diffusion::MakeSchedule(d.steps, d.beta_start, d.beta_end,
                                               diffusion::ParseScheduleKind(d.schedule));
    }
    const auto full = data::LoadCorpus(corpus_path);
    const auto scores_all = ReadScoresCsv(scores_path, full, model.constraints);
    data::Corpus train;
    train.meta = full.meta;
    std::vector<std::vector<double>> scores;
    for (std::size_t i = 0; i < full.trajectories.size(); ++i)
      if (!data::IsTestId(full.trajectories[i].id, model.config.data.test_fraction)) {
        train.trajectories.push_back(full.trajectories[i]);
        scores.push_back(scores_all[i]);
      }
    const auto rep = TrainDenoiser(model, train, scores);
    SaveModel(out, model);
    std::printf("trained on %zu trajectories: initial_loss=%.4f final_loss=%.4f (%.1fs)\n",
                train.trajectories.size(), rep.initial_loss,
                rep.epoch_loss.empty() ? rep.initial_loss : rep.epoch_loss.back(), rep.seconds);
    if (!report_path.empty())
      WriteJson(report_path, {{"initial_loss", rep.initial_loss},
                              {"epoch_loss", rep.epoch_loss},
                              {"seconds", rep.seconds}});
  });

  // predict
  std::vector<double> c_values;
  std::vector<std::int64_t> ids;
  int n_s = 0, n_c = 0;
  std::string svg_path, mode_name;
  auto* pr = app.add_subcommand("predict", "Sample futures for chosen histories");
  pr->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  pr->add_option("--corpus", corpus_path, "History source")->required()->check(CLI::ExistingFile);
  pr->add_option("--id", ids, "History ids (default: first test history)");
  pr->add_option("--c", c_values, "Constraint value per score; omit for the best-of grid");
  pr->add_option("--nc", n_c, "Grid size when --c is omitted");
  pr->add_option("--ns", n_s, "Draws per condition");
  pr->add_option("--mode", mode_name)->check(CLI::IsMember({"ancestral", "paper-mean"}));
  pr->add_option("--svg", svg_path, "Overlay of the first history");
  pr->add_option("--out", out)->required();
  pr->callback([&] {
    const Model model = LoadModel(ckpt_path);
    const auto corpus = data::LoadCorpus(corpus_path);
    const auto mode = diffusion::ParseSampleMode(mode_name.empty() ? model.config.diffusion.sample_mode : mode_name);
    const std::uint64_t seed = g.seed_set ? g.seed : model.config.seed;
    const int ns = n_s > 0 ? n_s : model.config.eval.n_s;
    if (!c_values.empty() && c_values.size() != model.score_count())
      throw UsageError("score_count_mismatch",
                       "score count mismatch: got " + std::to_string(c_values.size()) +
                           " values for " + std::to_string(model.score_count()) + " constraints");
    std::vector<const data::Trajectory*> targets;
    for (auto id : ids) targets.push_back(&FindTrajectory(corpus, id));
    if (targets.empty()) {
      const auto test = data::SplitCorpus(corpus, model.config.data.test_fraction, true);
      const auto& pool = test.trajectories.empty() ? corpus.trajectories : test.trajectories;
      if (pool.empty()) throw DataError("empty_corpus", "no histories to predict from");
      targets.push_back(&FindTrajectory(corpus, pool.front().id));
    }
    std::vector<Prediction> all;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto preds = c_values.empty()
                       ? PredictBestOf(model, *targets[i], n_c > 0 ? n_c : model.config.eval.n_c, ns, seed, mode)
                       : PredictAt(model, *targets[i], c_values, ns, seed, mode);
      if (i == 0 && !svg_path.empty()) {
        std::vector<svg::Track> tracks;
        for (const auto& p : preds) tracks.push_back({p.scores[0], p.future});
        svg::WriteTrajectoryPlot(svg_path, "history " + std::to_string(targets[i]->id),
                                 targets[i]->history, targets[i]->future, tracks,
                                 targets[i]->neighbors);
      }
      all.insert(all.end(), preds.begin(), preds.end());
    }
    WritePredictionsCsv(out, model, all);
    std::printf("wrote %zu predictions\n", all.size());
  });

  // eval
  int max_histories = -1;
  std::string eval_split = "test", sweep_split = "test";
  auto* ev = app.add_subcommand("eval", "Best-of-N minADE/minFDE on a corpus split");
  ev->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--nc", n_c);
  ev->add_option("--ns", n_s);
  ev->add_option("--split", eval_split)->check(CLI::IsMember({"train", "test", "all"}));
  ev->add_option("--max-histories", max_histories, "0 evaluates the whole split");
  ev->add_option("--mode", mode_name)->check(CLI::IsMember({"ancestral", "paper-mean"}));
  ev->add_option("--out", out)->required();
  ev->callback([&] {
    const Model model = LoadModel(ckpt_path);
    const auto& e = model.config.eval;
    const auto corpus = eval::Subsample(
        SelectSplit(data::LoadCorpus(corpus_path), eval_split, model.config.data.test_fraction),
        max_histories >= 0 ? max_histories : e.max_histories);
    const auto mode = diffusion::ParseSampleMode(mode_name.empty() ? model.config.diffusion.sample_mode : mode_name);
    const std::uint64_t seed = g.seed_set ? g.seed : model.config.seed;
    const std::vector<eval::MetricReport> reps{
        eval::EvaluateBestOf(model, corpus, n_c > 0 ? n_c : e.n_c, n_s > 0 ? n_s : e.n_s, seed, mode),
        eval::ConstantVelocityBaseline(corpus)};
    eval::WriteMetricsCsv(out, reps);
    std::printf("minADE=%.4f minFDE=%.4f (constant velocity: %.4f / %.4f) over %zu histories\n",
                reps[0].min_ade, reps[0].min_fde, reps[1].min_ade, reps[1].min_fde,
                corpus.trajectories.size());
  });

  // sweep
  std::string kind = "ablation";
  int axis = 0, grid = 0, draws = 0;
  auto* sw = app.add_subcommand("sweep", "Ablation table, adherence curve or two-constraint grid");
  sw->add_option("--kind", kind)->check(CLI::IsMember({"ablation", "adherence", "grid"}));
  sw->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  sw->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  sw->add_option("--axis", axis, "Constraint index for adherence");
  sw->add_option("--grid", grid, "Grid size for adherence/grid sweeps");
  sw->add_option("--draws", draws, "Draws per history per grid value");
  sw->add_option("--split", sweep_split)->check(CLI::IsMember({"train", "test", "all"}));
  sw->add_option("--max-histories", max_histories);
  sw->add_option("--mode", mode_name)->check(CLI::IsMember({"ancestral", "paper-mean"}));
  sw->add_option("--svg", svg_path);
  sw->add_option("--out", out)->required();
  sw->callback([&] {
    const Model model = LoadModel(ckpt_path);
    const auto& e = model.config.eval;
    const auto corpus = eval::Subsample(
        SelectSplit(data::LoadCorpus(corpus_path), sweep_split, model.config.data.test_fraction),
        max_histories >= 0 ? max_histories : e.max_histories);
    const auto mode = diffusion::ParseSampleMode(mode_name.empty() ? model.config.diffusion.sample_mode : mode_name);
    const std::uint64_t seed = g.seed_set ? g.seed : model.config.seed;
    const int gs = grid > 0 ? grid : (kind == "grid" ? 5 : e.grid_size);
    const int nd = draws > 0 ? draws : e.draws;
    if (kind == "ablation") {
      const auto cells = eval::DefaultAblationCells();
      const auto reps = eval::AblationSweep(model, corpus, cells, seed, mode);
      eval::WriteMetricsCsv(out, reps);
      for (const auto& r : reps)
        std::printf("N_c=%d N_s=%d minADE=%.4f minFDE=%.4f\n", r.n_c, r.n_s, r.min_ade, r.min_fde);
    } else if (kind == "adherence") {
      const auto r = eval::AdherenceCurve(model, corpus, axis, gs, nd, seed, mode);
      eval::WriteAdherenceCsv(out, r);
      if (!svg_path.empty()) {
        const svg::Series s{r.constraint, r.grid, r.mean_feature};
        svg::WriteLinePlot(svg_path, r.constraint + " adherence", "c", r.feature, std::span(&s, 1));
      }
      std::printf("%s: rho=%.4f monotone_fraction=%.3f%s\n", r.constraint.c_str(), r.rho,
                  r.monotone_fraction, r.adheres ? "" : " (below adherence threshold)");
    } else {
      const auto r = eval::MultiConstraintGrid(model, corpus, gs, nd, seed, mode);
      eval::WriteGridCsv(out, r);
      if (!svg_path.empty()) {
        std::vector<svg::Series> series;
        const auto n = static_cast<std::size_t>(r.size);
        for (std::size_t held = 0; held < n; held += std::max<std::size_t>(1, n / 3)) {
          svg::Series s{r.constraints[0] + " @ " + r.constraints[1] + "=" +
                            std::to_string(r.cells[held].c2).substr(0, 4), {}, {}};
          for (std::size_t a = 0; a < n; ++a) {
            s.x.push_back(r.cells[a * n + held].c1);
            s.y.push_back(r.cells[a * n + held].mean_feature1);
          }
          series.push_back(std::move(s));
        }
        svg::WriteLinePlot(svg_path, "two-constraint grid", "c_" + r.constraints[0],
                           r.features[0], series);
      }
      for (int a = 0; a < 2; ++a)
        std::printf("axis %d (%s): rho=%.4f effect=%.3f cross=%.3f separation=%.3f\n", a,
                    r.constraints[a].c_str(), r.rho[a], r.effect[a], r.cross[a], r.separation[a]);
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return static_cast<int>(ErrorKind::kUsage);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
