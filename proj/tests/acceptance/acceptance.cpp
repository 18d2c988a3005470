// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cli_run.hpp"
#include "ctd/checkpoint.hpp"
#include "ctd/diffusion.hpp"
#include "ctd/error.hpp"
#include "ctd/eval.hpp"
#include "ctd/pipeline.hpp"
#include "ctd/scoring.hpp"
#include "ethucy_fixtures.hpp"
#include "gradcheck.hpp"

namespace {

using namespace ctd;
using data::Constraint;
using diffusion::SampleMode;

constexpr std::uint64_t kSeed = 2024;
constexpr int kHistories = 16;  // test histories per sampling evaluation

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string Fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Corpus, pair sets and trained models shared by the criteria, built on first use.
class Workspace {
 public:
  Workspace() {
    corpus_ = data::GenerateSynthetic({.count = 5000, .seed = kSeed});
    const Config c;
    train_ = data::SplitCorpus(corpus_, c.data.test_fraction, false);
    test_ = data::SplitCorpus(corpus_, c.data.test_fraction, true);
    // 1% of the corpus: 50 histories, four candidate pairs each
    const double fraction = 50.0 / static_cast<double>(train_.trajectories.size());
    for (Constraint k : {Constraint::kSlowDown, Constraint::kTurnRight}) {
      const data::ConstraintAnnotator ann{k, data::DefaultTieThreshold(k)};
      pairs_.push_back(data::MakePairs(train_, ann,
                                       {.fraction = fraction, .pairs_per_history = 4,
                                        .seed = DeriveSeed(kSeed, {1, static_cast<std::uint64_t>(k)})},
                                       &pair_reports_.emplace_back()));
      heldout_.push_back(data::MakePairs(test_, ann,
                                         {.fraction = 0.05, .pairs_per_history = 4,
                                          .seed = DeriveSeed(kSeed, {2, static_cast<std::uint64_t>(k)})}));
    }
  }

  const data::Corpus& train() const { return train_; }
  const data::Corpus& test() const { return test_; }
  const data::PairSet& pairs(Constraint k) const { return pairs_[Index(k)]; }
  const data::PairSet& heldout(Constraint k) const { return heldout_[Index(k)]; }
  const data::PairReport& pair_report(Constraint k) const { return pair_reports_[Index(k)]; }
  data::Corpus Histories() const { return eval::Subsample(test_, kHistories); }

  Config BaseConfig() const {
    Config c;
    c.seed = kSeed;
    return c;
  }

  struct Trained {
    Model model;
    scoring::ScoreTrainReport scorer;
    std::optional<diffusion::DiffusionTrainReport> diffusion;
    double scorer_seconds = 0.0;
  };

  // Scorer for the given constraints, trained on their pair sets.
  Trained& Scorer(const std::vector<Constraint>& ks) {
    for (auto& [key, t] : trained_)
      if (key == ks) return t;
    auto t0 = std::chrono::steady_clock::now();
    Model m = CreateModel(BaseConfig(), ks, FutureScale(train_));
    std::vector<data::PairSet> tr, ho;
    for (Constraint k : ks) {
      tr.push_back(pairs(k));
      ho.push_back(heldout(k));
    }
    auto rep = TrainScorers(m, tr, ho);
    trained_.push_back({ks, Trained{std::move(m), std::move(rep), std::nullopt, Since(t0)}});
    return trained_.back().second;
  }

  // Scorer plus a denoiser trained on the scored training split.
  Trained& Full(const std::vector<Constraint>& ks) {
    Trained& t = Scorer(ks);
    if (!t.diffusion) {
      const auto scores = scoring::ScoreCorpus(t.model.scoring(), train_);
      t.diffusion = TrainDenoiser(t.model, train_, scores);
      std::printf("  (denoiser for %zu constraint(s): loss %.3f -> %.3f in %.0fs)\n", ks.size(),
                  t.diffusion->initial_loss, t.diffusion->epoch_loss.back(), t.diffusion->seconds);
      std::fflush(stdout);
    }
    return t;
  }

 private:
  static std::size_t Index(Constraint k) { return k == Constraint::kSlowDown ? 0 : 1; }

  data::Corpus corpus_, train_, test_;
  std::vector<data::PairSet> pairs_, heldout_;
  std::vector<data::PairReport> pair_reports_;
  std::list<std::pair<std::vector<Constraint>, Trained>> trained_;  // stable references
};

Outcome AutodiffGradients(Workspace&) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_op;
  constexpr std::size_t kTrials = 100;
  for (std::size_t op = 0; op < testing::kOpCount; ++op)
    for (std::size_t trial = 0; trial < kTrials; ++trial) {
      Rng rng = MakeRng(kSeed, {op, trial});
      auto c = testing::RandomOpCase(op, rng);
      const double err = testing::GradCheck(c.fn, c.inputs, rng).max_rel_err;
      if (err > worst) {
        worst = err;
        worst_op = c.name;
      }
    }
  const double secs = Since(t0);
  return {worst < 1e-4 && secs < 60,
          Fmt("%zu ops x %zu cases, max rel err %.2e (%s), %.1fs", testing::kOpCount, kTrials, worst,
              worst_op.c_str(), secs)};
}

Outcome ScheduleAndNoising(Workspace&) {
  const Config c;
  const auto s = diffusion::MakeSchedule(c.diffusion.steps, c.diffusion.beta_start,
                                         c.diffusion.beta_end);
  bool decreasing = true;
  for (int t = 1; t < s.steps; ++t) decreasing &= s.alpha_bar[t] < s.alpha_bar[t - 1];

  Rng rng = MakeRng(kSeed, {0x2});
  constexpr std::size_t kDraws = 100000;
  const Tensor y0({1, 2}, {0.7, -1.3});
  double worst_z = 0.0;
  for (int t : {1, 10, 50, 100}) {
    const double ab = s.alpha_bar[t - 1];
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (std::size_t i = 0; i < kDraws; ++i) {
      const Tensor eps({1, 2}, {StandardNormal(rng), StandardNormal(rng)});
      const Tensor y = diffusion::NoiseToT(y0, t, s, eps);
      for (int k = 0; k < 2; ++k) {
        sum[k] += y[k];
        sq[k] += y[k] * y[k];
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double n = kDraws;
      const double mean = sum[k] / n;
      const double var = (sq[k] - n * mean * mean) / (n - 1);
      const double v = 1 - ab;
      worst_z = std::max(worst_z, std::abs(mean - std::sqrt(ab) * y0[k]) / std::sqrt(v / n));
      worst_z = std::max(worst_z, std::abs(var - v) / (v * std::sqrt(2.0 / (n - 1))));
    }
  }
  return {decreasing && worst_z <= 3.0,
          Fmt("alpha_bar decreasing=%s, alpha_bar_T=%.4f, worst moment deviation %.2f sigma",
              decreasing ? "yes" : "no", s.alpha_bar.back(), worst_z)};
}

Outcome BtlIdentities(Workspace&) {
  Rng rng = MakeRng(kSeed, {0x3});
  double worst = 0.0;
  bool half = true;
  for (int i = 0; i < 100000; ++i) {
    const double a = Uniform(rng, -30, 30), b = Uniform(rng, -30, 30);
    worst = std::max(worst, std::abs(scoring::BtlProb(a, b) + scoring::BtlProb(b, a) - 1.0));
    half &= scoring::BtlProb(a, a) == 0.5;
  }
  double loss_err = 0.0;
  for (std::size_t batch : {1u, 16u, 32u, 257u}) {
    const Tensor s = Tensor::Filled({batch, 1}, Uniform(rng, 0, 1));
    std::vector<int> labels(batch);
    for (auto& l : labels) l = Uniform(rng, 0, 1) < 0.5;
    const double loss = scoring::MleLoss(ad::Constant(s), ad::Constant(s), labels)->value[0];
    loss_err = std::max(loss_err, std::abs(loss - batch * std::log(2.0)));
  }
  return {worst <= 1e-15 && half && loss_err <= 1e-9,
          Fmt("max |p(a,b)+p(b,a)-1| = %.1e, p(s,s)=0.5 %s, max |L - B ln2| = %.1e", worst,
              half ? "always" : "not always", loss_err)};
}

Outcome EntropyEffect(Workspace& ws) {
  // Same data, init and shuffling for both runs; only lambda differs. Every
  // seed must show the effect.
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int wider = 0, higher_entropy = 0;
  std::ostringstream os;
  for (std::uint64_t seed : seeds) {
    double sd[2], ent[2];
    for (int run = 0; run < 2; ++run) {
      Config c = ws.BaseConfig();
      c.seed = seed;
      c.scorer.lambda = run == 0 ? 0.0 : 0.1;
      Model m = CreateModel(c, {Constraint::kSlowDown}, FutureScale(ws.train()));
      const data::PairSet& tr = ws.pairs(Constraint::kSlowDown);
      const data::PairSet& ho = ws.heldout(Constraint::kSlowDown);
      sd[run] = TrainScorers(m, std::span(&tr, 1), std::span(&ho, 1)).heads[0].heldout_score_std;
      // reported alongside: entropy of the held-out scores themselves
      std::vector<double> all;
      for (auto [a, b] : scoring::ScorePairs(m.scoring(), 0, ho)) all.insert(all.end(), {a, b});
      ent[run] = scoring::EntropyPenalty(ad::Constant(Tensor({all.size(), 1}, all)), 20, 0.05)->value[0];
    }
    wider += sd[1] > sd[0];
    higher_entropy += ent[1] > ent[0];
    os << Fmt(" seed %llu: %.4f vs %.4f (H %.3f vs %.3f);", static_cast<unsigned long long>(seed),
              sd[0], sd[1], ent[0], ent[1]);
  }
  std::vector<double> spread, same(32, 0.5);
  for (int i = 0; i < 32; ++i) spread.push_back((i + 0.5) / 32);
  auto h = [](const std::vector<double>& v) {
    return scoring::EntropyPenalty(ad::Constant(Tensor({v.size(), 1}, v)), 20, 0.05)->value[0];
  };
  const double hs = h(spread), hc = h(same);
  return {wider == static_cast<int>(seeds.size()) && hs > hc,
          Fmt("held-out score std lambda=0 vs 0.1:%s std wider in %d/%zu, entropy higher in %d/%zu; "
              "H(spread)=%.3f > H(const)=%.3f",
              os.str().c_str(), wider, seeds.size(), higher_entropy, seeds.size(), hs, hc)};
}

Outcome ScorerQuality(Workspace& ws) {
  bool ok = true;
  std::ostringstream os;
  for (Constraint k : {Constraint::kSlowDown, Constraint::kTurnRight}) {
    const auto& t = ws.Scorer({k});
    const auto& h = t.scorer.heads[0];
    const auto& pr = ws.pair_report(k);
    ok &= h.heldout_accuracy >= 0.9 && h.train_pairs <= 200 && pr.histories <= 50 &&
          t.scorer_seconds < 300;
    os << Fmt("%s: %zu pairs from %zu histories, held-out acc %.3f on %zu pairs, %.1fs; ",
              h.constraint.c_str(), h.train_pairs, pr.histories, h.heldout_accuracy,
              h.heldout_pairs, t.scorer_seconds);
  }
  return {ok, os.str()};
}

Outcome Adherence(Workspace& ws) {
  bool ok = true;
  std::ostringstream os;
  for (Constraint k : {Constraint::kSlowDown, Constraint::kTurnRight}) {
    const Model& m = ws.Full({k}).model;
    const auto r = eval::AdherenceCurve(m, ws.Histories(), 0, 20, m.config.eval.draws, kSeed,
                                        SampleMode::kAncestral);
    const bool pass = k == Constraint::kSlowDown ? r.rho <= -0.8 : std::abs(r.rho) >= 0.8;
    ok &= pass && r.seconds < 600;
    os << Fmt("%s: rho(c, %s) = %.3f, monotone %.2f, %.0fs; ", r.constraint.c_str(),
              r.feature.c_str(), r.rho, r.monotone_fraction, r.seconds);
  }
  return {ok, os.str()};
}

Outcome MultiConstraint(Workspace& ws) {
  const Model& m = ws.Full({Constraint::kTurnRight, Constraint::kSlowDown}).model;
  const auto g = eval::MultiConstraintGrid(m, ws.Histories(), 5, m.config.eval.draws, kSeed,
                                           SampleMode::kAncestral);
  bool ok = true;
  std::ostringstream os;
  for (int a = 0; a < 2; ++a) {
    ok &= std::abs(g.rho[a]) >= 0.6 && g.effect[a] > g.cross[a];
    os << Fmt("%s: |rho| %.3f, effect %.2f vs cross %.2f; ", g.constraints[a].c_str(),
              std::abs(g.rho[a]), g.effect[a], g.cross[a]);
  }
  os << Fmt("%dx%d grid, %.0fs", g.size, g.size, g.seconds);
  return {ok, os.str()};
}

std::vector<eval::MetricReport>& AblationTable(Workspace& ws) {
  static std::vector<eval::MetricReport> table;
  if (table.empty()) {
    const Model& m = ws.Full({Constraint::kSlowDown}).model;
    const auto cells = eval::DefaultAblationCells();
    table = eval::AblationSweep(m, ws.Histories(), cells, kSeed, SampleMode::kAncestral);
  }
  return table;
}

Outcome AblationOrdering(Workspace& ws) {
  const auto& t = AblationTable(ws);
  auto find = [&](int nc, int ns) -> const eval::MetricReport& {
    for (const auto& r : t)
      if (r.n_c == nc && r.n_s == ns) return r;
    throw UsageError("missing_cell", "ablation cell missing");
  };
  const double best = find(20, 20).min_ade;
  bool is_best = true;
  std::ostringstream os;
  for (const auto& r : t) {
    if (r.n_c != 20 || r.n_s != 20) is_best &= best < r.min_ade;
    os << Fmt("(%d,%d) %.3f; ", r.n_c, r.n_s, r.min_ade);
  }
  const bool order = find(20, 1).min_ade > find(10, 10).min_ade;
  return {is_best && order, os.str() + Fmt("20x20 best: %s, (20,1) worse than (10,10): %s",
                                           is_best ? "yes" : "no", order ? "yes" : "no")};
}

Outcome BeatsConstantVelocity(Workspace& ws) {
  const auto& t = AblationTable(ws);
  const auto cv = eval::ConstantVelocityBaseline(ws.Histories());
  const double ours = t.front().min_ade;
  const double gain = 1.0 - ours / cv.min_ade;
  return {t.front().n_c == 20 && t.front().n_s == 20 && gain >= 0.2,
          Fmt("best-of-400 minADE %.3f m vs constant velocity %.3f m on %d test histories (%.0f%% lower)",
              ours, cv.min_ade, kHistories, 100 * gain)};
}

Outcome Plumbing(Workspace& ws) {
  std::ostringstream os;
  bool ok = true;

  // ETH/UCY import on hand-built files
  {
    std::istringstream is(fixtures::SinglePedestrian());
    data::ImportReport rep;
    const auto c = data::ImportEthUcyStream(is, "unit", {}, &rep);
    double err = 0;
    for (int i = 0; i < 8; ++i) err = std::max(err, std::abs(c.trajectories[0].history[i].x - i));
    for (int i = 0; i < 12; ++i) err = std::max(err, std::abs(c.trajectories[0].future[i].x - 8 - i));
    std::istringstream two(fixtures::TwoPedestrians());
    data::ImportReport rep2;
    data::ImportEthUcyStream(two, "unit", {}, &rep2);
    std::istringstream ten(fixtures::TenHertz(1.3));
    data::ImportOptions o;
    o.frame_rate = 10;
    const auto c10 = data::ImportEthUcyStream(ten, "unit", o);
    double spacing = 0;
    for (const auto& t : c10.trajectories)
      for (int i = 1; i < 8; ++i)
        spacing = std::max(spacing, std::abs(std::hypot(t.history[i].x - t.history[i - 1].x,
                                                        t.history[i].y - t.history[i - 1].y) -
                                             0.52));
    const bool eth = rep.segments == 1 && err <= 1e-9 && rep2.segments == 4 && spacing <= 1e-9;
    ok &= eth;
    os << Fmt("import %s; ", eth ? "exact" : "wrong");
  }

  // checkpoint round trip of a trained bundle
  {
    const Model& m = ws.Full({Constraint::kSlowDown}).model;
    std::ostringstream a, b;
    WriteCheckpoint(a, ToCheckpoint(m));
    std::istringstream in(a.str());
    WriteCheckpoint(b, ToCheckpoint(FromCheckpoint(ReadCheckpoint(in))));
    const bool same = a.str() == b.str();
    ok &= same;
    os << Fmt("checkpoint %zu bytes %s; ", a.str().size(), same ? "byte-identical" : "differs");
  }

  // every subcommand twice under one seed
  {
    testing::TempDir d("ctd_acceptance_cli");
    const auto r = testing::RunPipelineTwice(d);
    const bool same = r.failure.empty() && r.mismatched.empty() && r.compared == 12;
    ok &= same;
    os << Fmt("CLI outputs reproducible %d/12", r.compared - static_cast<int>(r.mismatched.size()));
    if (!r.failure.empty()) os << " (failed: " << r.failure << ")";
  }
  return {ok, os.str()};
}

}  // namespace

int main() {
  Workspace ws;
  const std::vector<std::pair<std::string, std::function<Outcome(Workspace&)>>> criteria = {
      {"autodiff gradients", AutodiffGradients},
      {"schedule and noising", ScheduleAndNoising},
      {"BTL identities", BtlIdentities},
      {"entropy regularization", EntropyEffect},
      {"scorer accuracy", ScorerQuality},
      {"conditional adherence", Adherence},
      {"two-constraint grid", MultiConstraint},
      {"ablation ordering", AblationOrdering},
      {"beats constant velocity", BeatsConstantVelocity},
      {"plumbing", Plumbing},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second(ws);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
