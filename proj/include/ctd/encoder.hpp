#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctd/autodiff.hpp"
#include "ctd/data.hpp"
#include "ctd/nn.hpp"

namespace ctd::encoder {

struct EncoderOptions {
  int n = 8;
  double dt = 0.4;
  int ego_hidden = 64;
  int edge_hidden = 32;
  double input_scale = 1.0;  // meters per input unit
};

/// History encoder: an ego GRU over per-step [position, velocity] and an edge
/// GRU over each neighbour's relative positions, mean-aggregated. All inputs
/// are ego-relative (translated so the last history point is the origin), so
/// the feature is translation invariant. Neighbours are put in a canonical
/// nearest-first order before aggregation, so the feature does not depend on
/// the order they are listed in.
class Encoder {
 public:
  Encoder() = default;
  Encoder(nn::ParamSet& params, const std::string& prefix,
          const EncoderOptions& options, Rng& rng);

  /// [B, ego_hidden + edge_hidden]; differentiable w.r.t. encoder weights.
  ad::Var Encode(std::span<const data::Polyline> histories,
                 std::span<const std::vector<data::Polyline>> neighbors) const;

  /// Single-history convenience wrapper (no graph recorded).
  Tensor EncodeOne(const data::Polyline& history,
                   const std::vector<data::Polyline>& neighbors) const;

  std::size_t feature_dim() const {
    return static_cast<std::size_t>(options_.ego_hidden + options_.edge_hidden);
  }
  const EncoderOptions& options() const { return options_; }

 private:
  EncoderOptions options_;
  nn::GruCell ego_;
  nn::GruCell edge_;
};

/// Neighbours sorted nearest-first at the last history step (ties broken by
/// coordinates), so permutations of the input map to the same order.
std::vector<data::Polyline> CanonicalNeighbors(
    const data::Polyline& history, const std::vector<data::Polyline>& neighbors);

}  // namespace ctd::encoder
