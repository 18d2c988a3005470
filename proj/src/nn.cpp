#include "ctd/nn.hpp"

#include <cmath>

#include "ctd/error.hpp"

namespace ctd::nn {

ad::Var ParamSet::Add(const std::string& name, Tensor init) {
  if (Has(name)) throw UsageError("duplicate_param", "parameter " + name + " exists");
  auto v = ad::Parameter(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

void ParamSet::Adopt(const std::string& name, ad::Var leaf) {
  if (Has(name)) throw UsageError("duplicate_param", "parameter " + name + " exists");
  entries_.emplace_back(name, std::move(leaf));
}

ad::Var ParamSet::Get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw UsageError("missing_param", "no parameter named " + name);
}

bool ParamSet::Has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::size_t ParamSet::NumScalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second->value.size();
  return n;
}

void ParamSet::ZeroGrad() {
  for (auto& e : entries_)
    if (e.second->has_grad()) e.second->grad.Fill(0.0);
}

void ParamSet::LoadFrom(const ParamSet& other) {
  for (auto& [name, v] : entries_) {
    if (!other.Has(name)) continue;
    const Tensor& src = other.Get(name)->value;
    if (src.shape() != v->value.shape())
      throw DataError("param_shape", "parameter " + name + " has shape " +
                                         ShapeString(src.shape()) + ", expected " +
                                         ShapeString(v->value.shape()));
    v->value = src;
  }
}

std::vector<Tensor> ParamSet::Values() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) out.push_back(e.second->value);
  return out;
}

Tensor XavierUniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (double& x : t.vec()) x = Uniform(rng, -bound, bound);
  return t;
}

Linear::Linear(ParamSet& params, const std::string& name, std::size_t in,
               std::size_t out, Rng& rng, double init_gain)
    : in_(in), out_(out) {
  Tensor w = XavierUniform(rng, in, out);
  for (double& x : w.vec()) x *= init_gain;
  weight_ = params.Add(name + ".weight", std::move(w));
  bias_ = params.Add(name + ".bias", Tensor::Zeros({out}));
}

ad::Var Linear::operator()(const ad::Var& x) const {
  return ad::Add(ad::MatMul(x, weight_), bias_);
}

GruCell::GruCell(ParamSet& params, const std::string& name, std::size_t in,
                 std::size_t hidden, Rng& rng)
    : in_(in), hidden_(hidden) {
  w_zr_ = params.Add(name + ".w_zr", XavierUniform(rng, in, 2 * hidden));
  u_zr_ = params.Add(name + ".u_zr", XavierUniform(rng, hidden, 2 * hidden));
  b_zr_ = params.Add(name + ".b_zr", Tensor::Zeros({2 * hidden}));
  w_n_ = params.Add(name + ".w_n", XavierUniform(rng, in, hidden));
  u_n_ = params.Add(name + ".u_n", XavierUniform(rng, hidden, hidden));
  b_n_ = params.Add(name + ".b_n", Tensor::Zeros({hidden}));
}

ad::Var GruCell::Step(const ad::Var& x, const ad::Var& h) const {
  using namespace ad;
  Var zr = Sigmoid(Add(Add(MatMul(x, w_zr_), MatMul(h, u_zr_)), b_zr_));
  Var z = Slice(zr, 1, 0, hidden_);
  Var r = Slice(zr, 1, hidden_, 2 * hidden_);
  Var n = Tanh(Add(Add(MatMul(x, w_n_), MatMul(Mul(r, h), u_n_)), b_n_));
  return Add(n, Mul(z, Sub(h, n)));
}

Adam::Adam(const ParamSet& params, AdamOptions options) : options_(options) {
  if (!(options_.lr > 0))
    throw UsageError("bad_lr", "learning rate must be positive");
  for (const auto& [name, v] : params.entries()) {
    params_.push_back(v);
    names_.push_back(name);
    m_.emplace_back(v->value.size(), 0.0);
    v_.emplace_back(v->value.size(), 0.0);
  }
}

void Adam::Step() {
  double sq = 0.0;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k]->has_grad()) continue;
    for (double g : params_[k]->grad.vec()) {
      if (!std::isfinite(g))
        throw NumericalError("nan_gradient", "non-finite gradient in parameter " + names_[k]);
      sq += g * g;
    }
  }
  double scale = 1.0;
  if (options_.clip_norm > 0 && std::sqrt(sq) > options_.clip_norm)
    scale = options_.clip_norm / std::sqrt(sq);
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    if (!p.has_grad()) continue;
    auto& w = p.value.vec();
    const auto& g = p.grad.vec();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gi * gi;
      w[i] -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
  }
}

}  // namespace ctd::nn
