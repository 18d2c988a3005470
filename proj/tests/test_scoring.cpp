#include <cmath>
#include <numeric>

#include "ctd/error.hpp"
#include "ctd/scoring.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace ctd;
using namespace ctd::scoring;

namespace {

// direct double-precision KDE entropy, normalized grid
double EntropyOracle(const std::vector<double>& s, int k, double h) {
  std::vector<double> p(k);
  double z = 0;
  for (int i = 0; i < k; ++i) {
    const double g = (i + 1.0) / k;
    double d = 0;
    for (double x : s) d += std::exp(-0.5 * (g - x) * (g - x) / (h * h));
    p[i] = d / (s.size() * h * std::sqrt(2 * M_PI)) + 1e-12;
    z += p[i];
  }
  double e = 0;
  for (double v : p) e -= v / z * std::log(v / z);
  return e;
}

double Entropy(const std::vector<double>& s, int k = 20, double h = 0.05) {
  return EntropyPenalty(ad::Constant(Tensor({s.size(), 1}, s)), k, h)->value[0];
}

struct Scorer {
  nn::ParamSet enc_params, head_params;
  encoder::Encoder enc;
  std::vector<ScorerHead> heads;
  ScoringModel model;

  explicit Scorer(std::uint64_t seed) {
    Rng rng = MakeRng(seed, {1});
    enc = encoder::Encoder(enc_params, "enc", {}, rng);
    heads.emplace_back(head_params, "head", enc.feature_dim(), 12, std::vector<int>{32, 16}, rng);
    model = {&enc, &enc_params, &heads, &head_params, 1.0};
  }
};

data::PairSet SlowDownPairs(std::uint64_t seed, double fraction) {
  const auto corpus = data::GenerateSynthetic({.count = 1000, .seed = seed});
  return data::MakePairs(corpus, {data::Constraint::kSlowDown, 0.1},
                         {.fraction = fraction, .pairs_per_history = 4, .seed = seed});
}

data::PairSet Flipped(data::PairSet p) {
  for (auto& s : p.pairs) s.label = 1 - s.label;
  return p;
}

double TotalLoss(const Scorer& s, const data::PairSet& p) {
  const auto scores = ScorePairs(s.model, 0, p);
  Tensor a({scores.size(), 1}), b({scores.size(), 1});
  std::vector<int> labels;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    a[i] = scores[i].first;
    b[i] = scores[i].second;
    labels.push_back(p.pairs[i].label);
  }
  return MleLoss(ad::Constant(a), ad::Constant(b), labels)->value[0];
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("zero weights score 0.5 and scores stay in (0, 1)") {
  Scorer s(1);
  const auto corpus = data::GenerateSynthetic({.count = 20, .seed = 1});
  for (const auto& t : corpus.trajectories) {
    const double v = ScoreOne(s.model, 0, t.history, t.neighbors, t.future);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    CHECK(v == ScoreOne(s.model, 0, t.history, t.neighbors, t.future));
  }
  for (const auto& [name, v] : s.head_params.entries()) v->value.vec().assign(v->value.size(), 0.0);
  for (const auto& t : corpus.trajectories)
    CHECK(ScoreOne(s.model, 0, t.history, t.neighbors, t.future) == 0.5);
}

TEST_CASE("score rejects mismatched widths") {
  Scorer s(2);
  ad::NoGradGuard guard;
  const ad::Var f = ad::Constant(Tensor({1, 96}));
  CHECK_THROWS_AS(s.heads[0].Score(f, Tensor({1, 20})), Error);
  CHECK_NOTHROW(s.heads[0].Score(f, Tensor({1, 24})));
}

TEST_CASE("btl identities") {
  CHECK(BtlProb(0.3, 0.3) == 0.5);
  CHECK(BtlProb(1, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(std::abs(BtlProb(1, 0) - std::exp(1.0) / (std::exp(1.0) + 1)) <= 1e-15);
  Rng rng = MakeRng(5, {});
  for (int i = 0; i < 10000; ++i) {
    const double a = Uniform(rng, -50, 50), b = Uniform(rng, -50, 50);
    CHECK(BtlProb(a, b) + BtlProb(b, a) == 1.0);
  }
  CHECK(BtlProb(800, -800) == 1.0);
  CHECK(BtlProb(-800, 800) >= 0.0);
}

TEST_CASE("mle loss of equal scores is B ln 2") {
  for (std::size_t b : {1u, 7u, 32u}) {
    const Tensor s = Tensor::Filled({b, 1}, 0.42);
    std::vector<int> labels(b);
    for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % 2);
    const double loss = MleLoss(ad::Constant(s), ad::Constant(s), labels)->value[0];
    CHECK(std::abs(loss - b * std::log(2.0)) <= 1e-9);
  }
  const double big = MleLoss(ad::Constant(Tensor({1, 1}, {20.0})), ad::Constant(Tensor({1, 1}, {0.0})),
                             std::vector<int>{0})->value[0];
  CHECK(big > 0.0);
  CHECK(big < 1e-8);
  CHECK_THROWS_AS(MleLoss(ad::Constant(Tensor({0, 1})), ad::Constant(Tensor({0, 1})), {}), Error);
}

TEST_CASE("entropy matches a direct computation") {
  Rng rng = MakeRng(9, {});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(2 + trial);
    for (double& x : s) x = Uniform(rng, 0.01, 0.99);
    CHECK(std::abs(Entropy(s) - EntropyOracle(s, 20, 0.05)) <= 1e-12);
    CHECK(std::abs(Entropy(s, 7, 0.2) - EntropyOracle(s, 7, 0.2)) <= 1e-12);
  }
}

TEST_CASE("entropy is bounded, prefers spread scores, ignores order") {
  std::vector<double> spread;
  for (int i = 0; i < 32; ++i) spread.push_back((i + 0.5) / 32);
  const std::vector<double> same(32, 0.5);
  const double hs = Entropy(spread), hc = Entropy(same);
  CHECK(hs > hc);
  CHECK(hs <= std::log(20.0) + 1e-12);
  CHECK(hc <= std::log(20.0));
  std::vector<double> shuffled = spread;
  Rng rng = MakeRng(2, {});
  for (std::size_t i = shuffled.size() - 1; i > 0; --i)
    std::swap(shuffled[i], shuffled[static_cast<std::size_t>(Uniform(rng, 0, i + 1))]);
  CHECK(std::abs(Entropy(shuffled) - hs) <= 1e-12);
  CHECK_THROWS_AS(Entropy(spread, 1), Error);
  CHECK_THROWS_AS(Entropy({0.5}), Error);
}

TEST_CASE("entropy gradient matches finite differences") {
  Rng rng = MakeRng(4, {});
  for (bool normalize : {true, false})
    for (int trial = 0; trial < 10; ++trial) {
      Tensor s({16, 1});
      for (double& x : s.vec()) x = Uniform(rng, 0.05, 0.95);
      const testing::Fn f = [&](const std::vector<ad::Var>& v) {
        return EntropyPenalty(v[0], 20, 0.05, normalize);
      };
      CHECK(testing::GradCheck(f, {s}, rng).max_rel_err < 1e-4);
    }
}

TEST_CASE("zero epochs leave parameters unchanged") {
  Scorer s(3);
  const auto before = s.head_params.Values();
  const auto enc_before = s.enc_params.Values();
  const data::PairSet p = SlowDownPairs(1, 0.05);
  ScoreTrainConfig cfg;
  cfg.epochs = 0;
  TrainScorer(s.model, std::span(&p, 1), {}, cfg);
  const auto after = s.head_params.Values();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].vec() == after[i].vec());
  const auto enc_after = s.enc_params.Values();
  for (std::size_t i = 0; i < enc_before.size(); ++i) CHECK(enc_before[i].vec() == enc_after[i].vec());
}

TEST_CASE("training learns slow-down and flipped labels cost more") {
  Scorer s(4);
  const data::PairSet train = SlowDownPairs(2, 0.05);
  const data::PairSet held = SlowDownPairs(3, 0.05);
  ScoreTrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 1;
  const auto rep = TrainScorer(s.model, std::span(&train, 1), std::span(&held, 1), cfg);
  REQUIRE(rep.heads.size() == 1);
  CHECK(rep.heads[0].heldout_accuracy >= 0.9);
  CHECK(rep.epoch_loss.size() == 40);
  CHECK(std::accumulate(rep.heads[0].histogram.begin(), rep.heads[0].histogram.end(), 0u) ==
        held.pairs.size() * 2);
  CHECK(TotalLoss(s, Flipped(held)) > TotalLoss(s, held));

  // the same run on flipped labels, with lambda 0, does no better on held-out pairs
  Scorer f(4);
  const data::PairSet flipped = Flipped(train);
  cfg.lambda = 0;
  const auto frep = TrainScorer(f.model, std::span(&flipped, 1), std::span(&held, 1), cfg);
  CHECK(frep.heads[0].heldout_accuracy <= rep.heads[0].heldout_accuracy);
}

TEST_CASE("non-finite parameters abort training") {
  Scorer s(5);
  s.head_params.entries()[0].second->value[0] = std::nan("");
  const data::PairSet p = SlowDownPairs(1, 0.05);
  ScoreTrainConfig cfg;
  cfg.epochs = 1;
  try {
    TrainScorer(s.model, std::span(&p, 1), {}, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumerical);
  }
}

}  // TEST_SUITE
