#include <cmath>

#include "ctd/encoder.hpp"
#include "ctd/error.hpp"
#include "doctest.h"

using namespace ctd;
using data::Polyline;
using data::Vec2;

namespace {

struct Fixture {
  nn::ParamSet params;
  encoder::Encoder enc;
  Fixture() {
    Rng rng = MakeRng(3, {1});
    enc = encoder::Encoder(params, "enc", {}, rng);
  }
};

Polyline Walk(Vec2 start, Vec2 step, int n = 8) {
  Polyline p;
  for (int i = 0; i < n; ++i) p.push_back({start.x + i * step.x, start.y + i * step.y});
  return p;
}

Polyline Shift(Polyline p, Vec2 d) {
  for (auto& q : p) q = {q.x + d.x, q.y + d.y};
  return p;
}

double MaxDiff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("no neighbours gives a zero edge half") {
  Fixture f;
  const Tensor out = f.enc.EncodeOne(Walk({0, 0}, {0.4, 0.1}), {});
  REQUIRE(out.size() == 96);
  double ego = 0;
  for (std::size_t i = 0; i < 64; ++i) ego += std::abs(out[i]);
  CHECK(ego > 0);
  for (std::size_t i = 64; i < 96; ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("neighbour order does not matter") {
  Fixture f;
  const Polyline h = Walk({0, 0}, {0.4, 0});
  std::vector<Polyline> nbs = {Walk({0, 1}, {0.3, 0}), Walk({2, -1}, {0, 0.3}),
                               Walk({-1, -2}, {0.2, 0.2})};
  const Tensor a = f.enc.EncodeOne(h, nbs);
  std::swap(nbs[0], nbs[2]);
  const Tensor b = f.enc.EncodeOne(h, nbs);
  std::swap(nbs[0], nbs[1]);
  const Tensor c = f.enc.EncodeOne(h, nbs);
  CHECK(MaxDiff(a, b) <= 1e-12);
  CHECK(MaxDiff(a, c) <= 1e-12);
}

TEST_CASE("translation leaves the feature unchanged") {
  Fixture f;
  const Polyline h = Walk({0.3, -0.2}, {0.35, 0.12});
  const std::vector<Polyline> nbs = {Walk({1, 1}, {0.1, -0.3})};
  const Tensor a = f.enc.EncodeOne(h, nbs);
  const Tensor b = f.enc.EncodeOne(Shift(h, {10, -3}), {Shift(nbs[0], {10, -3})});
  CHECK(MaxDiff(a, b) <= 1e-9);
}

TEST_CASE("batch rows match single encodes") {
  Fixture f;
  const std::vector<Polyline> hs = {Walk({0, 0}, {0.4, 0}), Walk({1, 2}, {-0.2, 0.3})};
  const std::vector<std::vector<Polyline>> nbs = {{}, {Walk({0, 3}, {0, 0.1})}};
  ad::NoGradGuard guard;
  const ad::Var batch = f.enc.Encode(hs, nbs);
  for (std::size_t r = 0; r < 2; ++r) {
    const Tensor one = f.enc.EncodeOne(hs[r], nbs[r]);
    for (std::size_t j = 0; j < one.size(); ++j)
      CHECK(std::abs(batch->value[r * one.size() + j] - one[j]) <= 1e-12);
  }
}

TEST_CASE("wrong history length is rejected") {
  Fixture f;
  try {
    f.enc.EncodeOne(Walk({0, 0}, {0.4, 0}, 5), {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUsage);
  }
}

TEST_CASE("gradients reach every encoder weight") {
  Fixture f;
  const std::vector<Polyline> hs = {Walk({0, 0}, {0.4, 0.1})};
  const std::vector<std::vector<Polyline>> nbs = {{Walk({0, 1}, {0.3, 0})}};
  ad::Backward(ad::Sum(ad::Square(f.enc.Encode(hs, nbs))));
  for (const auto& [name, v] : f.params.entries()) {
    REQUIRE(v->has_grad());
    double norm = 0;
    for (double g : v->grad.vec()) norm += g * g;
    CHECK_MESSAGE(norm > 0, name);
  }
}

TEST_CASE("canonical neighbour order is nearest first") {
  const Polyline h = Walk({0, 0}, {0.4, 0});
  const std::vector<Polyline> nbs = {Walk({0, 4}, {0, 0}), Walk({0, 1}, {0, 0}),
                                     Walk({0, 2}, {0, 0})};
  const auto c = encoder::CanonicalNeighbors(h, nbs);
  CHECK(c[0].back().y == 1);
  CHECK(c[1].back().y == 2);
  CHECK(c[2].back().y == 4);
}

}  // TEST_SUITE
