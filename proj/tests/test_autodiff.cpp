#include <cmath>

#include "ctd/autodiff.hpp"
#include "ctd/error.hpp"
#include "ctd/nn.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace ctd;
using ad::Var;

TEST_SUITE("autodiff") {

TEST_CASE("forward values") {
  CHECK(ad::Sigmoid(ad::Constant(Tensor::Scalar(0.0)))->value[0] == 0.5);

  Rng rng = MakeRng(1);
  Tensor a = testing::RandomTensor({3, 3}, rng);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  CHECK(ad::MatMul(ad::Constant(eye), ad::Constant(a))->value == a);

  // e/(e+1) and 1/(e+1)
  const Tensor sm = ad::Softmax(ad::Constant(Tensor::Vector({1.0, 0.0})))->value;
  CHECK(sm[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(sm[1] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(sm[0] + sm[1] == doctest::Approx(1.0));
}

TEST_CASE("backward of sum of squares") {
  Var x = ad::Parameter(Tensor::Vector({1.0, 2.0}));
  ad::Backward(ad::Sum(ad::Square(x)));
  CHECK(x->grad[0] == 2.0);
  CHECK(x->grad[1] == 4.0);
}

TEST_CASE("sigmoid slope at zero is a quarter") {
  const Tensor xv({3, 1}, {1.0, -2.0, 0.5});
  Var w = ad::Parameter(Tensor({1, 3}));
  ad::Backward(ad::Sum(ad::Sigmoid(ad::MatMul(w, ad::Constant(xv)))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(w->grad[i] == doctest::Approx(0.25 * xv[i]).epsilon(1e-15));
}

TEST_CASE("non-scalar loss is rejected") {
  Var x = ad::Parameter(Tensor::Vector({1.0, 2.0}));
  try {
    ad::Backward(ad::Square(x));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "non_scalar_loss");
  }
}

TEST_CASE("shape mismatch names op and shapes") {
  Var a = ad::Constant(Tensor({2, 3})), b = ad::Constant(Tensor({4, 5}));
  try {
    ad::MatMul(a, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUsage);
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::Add(a, ad::Constant(Tensor({2}))), Error);
}

TEST_CASE("non-finite forward values are errors") {
  Var x = ad::Constant(Tensor::Vector({0.0}));
  try {
    ad::Log(x);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumerical);
  }
}

TEST_CASE("repeated backward after zero_grad is idempotent") {
  Rng rng = MakeRng(3);
  nn::ParamSet ps;
  nn::Linear lin(ps, "l", 4, 3, rng);
  Var x = ad::Constant(testing::RandomTensor({5, 4}, rng));
  Var loss = ad::Mean(ad::Tanh(lin(x)));
  ad::Backward(loss);
  const auto first = ps.Get("l.weight")->grad;
  ps.ZeroGrad();
  ad::Backward(loss);
  CHECK(ps.Get("l.weight")->grad == first);
  // without zeroing, leaves accumulate
  ad::Backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i)
    CHECK(ps.Get("l.weight")->grad[i] == doctest::Approx(2 * first[i]));
}

TEST_CASE("shared subexpression is visited once") {
  Var x = ad::Parameter(Tensor::Vector({3.0}));
  Var y = ad::Square(x);
  ad::Backward(ad::Sum(ad::Add(y, y)));  // d(2x^2)/dx = 4x
  CHECK(x->grad[0] == 12.0);
}

TEST_CASE("concat and slice partition the upstream gradient") {
  Rng rng = MakeRng(4);
  Var a = ad::Parameter(testing::RandomTensor({3, 2}, rng));
  Var b = ad::Parameter(testing::RandomTensor({3, 4}, rng));
  Var cat = ad::Concat({a, b}, 1);
  const Tensor up = testing::RandomTensor({3, 6}, rng);
  ad::Backward(ad::Sum(ad::Mul(cat, ad::Constant(up))));
  double na = 0, nb = 0, nu = 0;
  for (double g : a->grad.vec()) na += g * g;
  for (double g : b->grad.vec()) nb += g * g;
  for (double g : up.vec()) nu += g * g;
  CHECK(na + nb == doctest::Approx(nu).epsilon(1e-14));

  Var s = ad::Parameter(testing::RandomTensor({2, 5}, rng));
  ad::Backward(ad::Sum(ad::Slice(s, 1, 1, 3)));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 5; ++c) CHECK(s->grad.at(r, c) == ((c >= 1 && c < 3) ? 1.0 : 0.0));
}

TEST_CASE("no-grad guard records no graph") {
  Var x = ad::Parameter(Tensor::Vector({1.0}));
  Var y;
  {
    ad::NoGradGuard guard;
    CHECK_FALSE(ad::GradEnabled());
    y = ad::Square(x);
  }
  CHECK(ad::GradEnabled());
  CHECK(y->parents.empty());
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("every op matches central differences") {
  for (std::size_t trial = 0; trial < 4 * testing::kOpCount; ++trial) {
    Rng rng = MakeRng(77, {trial});
    auto c = testing::RandomOpCase(trial, rng);
    const auto res = testing::GradCheck(c.fn, c.inputs, rng);
    INFO(c.name << " trial " << trial);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("composite net matches central differences") {
  Rng rng = MakeRng(9);
  nn::ParamSet ps;
  nn::GruCell gru(ps, "gru", 3, 4, rng);
  nn::Linear head(ps, "head", 4, 2, rng);
  const Tensor xs = testing::RandomTensor({2, 3}, rng);
  const Tensor h0 = testing::RandomTensor({2, 4}, rng);
  testing::Fn f = [&](const std::vector<Var>& v) {
    Var h = gru.Step(v[0], v[1]);
    h = gru.Step(ad::Scale(v[0], 0.5), h);
    return ad::Softmax(ad::LeakyRelu(head(ad::LayerNorm(h))));
  };
  CHECK(testing::GradCheck(f, {xs, h0}, rng).max_rel_err < 1e-4);
}

TEST_CASE("composite net gradients reach the weights") {
  Rng rng = MakeRng(10);
  testing::Fn f = [](const std::vector<Var>& v) {
    Var h = ad::Tanh(ad::Add(ad::MatMul(v[0], v[1]), v[2]));
    Var z = ad::MatMul(ad::LeakyRelu(ad::LayerNorm(h)), v[3]);
    return ad::Log(ad::Sum(ad::Exp(ad::Softmax(z))));
  };
  const auto res = testing::GradCheck(
      f, {testing::RandomTensor({4, 3}, rng), testing::RandomTensor({3, 5}, rng),
          testing::RandomTensor({5}, rng), testing::RandomTensor({5, 2}, rng)},
      rng);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    Rng rng = MakeRng(5);
    nn::ParamSet ps;
    nn::Linear a(ps, "a", 6, 8, rng), b(ps, "b", 8, 1, rng);
    Var x = ad::Constant(testing::RandomTensor({16, 6}, rng));
    Var loss = ad::Mean(ad::Square(b(ad::Tanh(a(x)))));
    ad::Backward(loss);
    return std::make_pair(loss->value, ps.Get("a.weight")->grad);
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
