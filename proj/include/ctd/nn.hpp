#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctd/autodiff.hpp"
#include "ctd/rng.hpp"

namespace ctd::nn {

/// Ordered, named collection of trainable leaves.
class ParamSet {
 public:
  ad::Var Add(const std::string& name, Tensor init);
  /// Registers an existing leaf (shared, not copied).
  void Adopt(const std::string& name, ad::Var leaf);
  ad::Var Get(const std::string& name) const;
  bool Has(const std::string& name) const;

  const std::vector<std::pair<std::string, ad::Var>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }
  std::size_t NumScalars() const;

  void ZeroGrad();
  /// Copies values from `other` for every matching name; shapes must agree.
  void LoadFrom(const ParamSet& other);
  /// Snapshot of current values (used to check "params unchanged").
  std::vector<Tensor> Values() const;

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
};

Tensor XavierUniform(Rng& rng, std::size_t fan_in, std::size_t fan_out);

/// y = x W + b
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet& params, const std::string& name, std::size_t in,
         std::size_t out, Rng& rng, double init_gain = 1.0);
  ad::Var operator()(const ad::Var& x) const;
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  ad::Var weight_, bias_;
  std::size_t in_ = 0, out_ = 0;
};

/// Gated recurrent unit: h' = (1 - z) * n + z * h.
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamSet& params, const std::string& name, std::size_t in,
          std::size_t hidden, Rng& rng);
  ad::Var Step(const ad::Var& x, const ad::Var& h) const;
  std::size_t hidden() const { return hidden_; }
  std::size_t in() const { return in_; }

 private:
  ad::Var w_zr_, u_zr_, b_zr_, w_n_, u_n_, b_n_;
  std::size_t in_ = 0, hidden_ = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip, 0 disables
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamOptions options);
  /// One update from the gradients currently held by the params. Throws a
  /// numerical error if any gradient is non-finite. Params without a
  /// gradient buffer are skipped.
  void Step();
  long step_count() const { return step_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  std::vector<ad::Var> params_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_, v_;
  AdamOptions options_;
  long step_ = 0;
};

}  // namespace ctd::nn
