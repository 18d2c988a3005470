#include "ctd/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "ctd/error.hpp"

namespace ctd::encoder {

using ad::Var;
using data::Polyline;
using data::Vec2;

Encoder::Encoder(nn::ParamSet& params, const std::string& prefix,
                 const EncoderOptions& options, Rng& rng)
    : options_(options) {
  if (options.n < 2 || options.ego_hidden < 1 || options.edge_hidden < 1 ||
      !(options.input_scale > 0) || !(options.dt > 0))
    throw UsageError("bad_option", "encoder options out of range");
  ego_ = nn::GruCell(params, prefix + ".ego", 4, options.ego_hidden, rng);
  edge_ = nn::GruCell(params, prefix + ".edge", 2, options.edge_hidden, rng);
}

std::vector<Polyline> CanonicalNeighbors(const Polyline& history,
                                         const std::vector<Polyline>& neighbors) {
  const Vec2 ego = history.back();
  std::vector<Polyline> out = neighbors;
  auto key = [&](const Polyline& p) {
    const double dx = p.back().x - ego.x, dy = p.back().y - ego.y;
    return std::make_tuple(dx * dx + dy * dy, dx, dy);
  };
  std::sort(out.begin(), out.end(), [&](const Polyline& a, const Polyline& b) {
    const auto ka = key(a), kb = key(b);
    if (ka != kb) return ka < kb;
    return std::lexicographical_compare(
        a.begin(), a.end(), b.begin(), b.end(), [](const Vec2& u, const Vec2& v) {
          return std::tie(u.x, u.y) < std::tie(v.x, v.y);
        });
  });
  return out;
}

Var Encoder::Encode(std::span<const Polyline> histories,
                    std::span<const std::vector<Polyline>> neighbors) const {
  const std::size_t batch = histories.size();
  const std::size_t n = static_cast<std::size_t>(options_.n);
  if (batch == 0 || neighbors.size() != batch)
    throw UsageError("bad_batch", "encode: histories and neighbor lists must be non-empty and aligned");
  const double inv_scale = 1.0 / options_.input_scale;
  // velocity expressed as displacement over the history span
  const double vel_gain = static_cast<double>(n) * inv_scale;

  std::vector<std::vector<Polyline>> sorted(batch);
  std::size_t edges = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (histories[b].size() != n)
      throw UsageError("bad_length", "encode: history has " +
                                         std::to_string(histories[b].size()) +
                                         " points, encoder expects " + std::to_string(n));
    for (const Polyline& nb : neighbors[b])
      if (nb.size() != n)
        throw UsageError("bad_length", "encode: neighbor history length differs from n");
    sorted[b] = CanonicalNeighbors(histories[b], neighbors[b]);
    edges += sorted[b].size();
  }

  // ego GRU
  Var h = ad::Constant(Tensor::Zeros({batch, static_cast<std::size_t>(options_.ego_hidden)}));
  for (std::size_t k = 0; k < n; ++k) {
    Tensor x({batch, 4});
    for (std::size_t b = 0; b < batch; ++b) {
      const Polyline& p = histories[b];
      const Vec2 o = p.back();
      const std::size_t kp = k == 0 ? 1 : k;
      x.at(b, 0) = (p[k].x - o.x) * inv_scale;
      x.at(b, 1) = (p[k].y - o.y) * inv_scale;
      x.at(b, 2) = (p[kp].x - p[kp - 1].x) * vel_gain;
      x.at(b, 3) = (p[kp].y - p[kp - 1].y) * vel_gain;
    }
    h = ego_.Step(ad::Constant(std::move(x)), h);
  }

  const std::size_t dn = static_cast<std::size_t>(options_.edge_hidden);
  Var edge_feat;
  if (edges == 0) {
    edge_feat = ad::Constant(Tensor::Zeros({batch, dn}));
  } else {
    Var he = ad::Constant(Tensor::Zeros({edges, dn}));
    for (std::size_t k = 0; k < n; ++k) {
      Tensor x({edges, 2});
      std::size_t e = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const Vec2 ego = histories[b][k];
        for (const Polyline& nb : sorted[b]) {
          x.at(e, 0) = (nb[k].x - ego.x) * inv_scale;
          x.at(e, 1) = (nb[k].y - ego.y) * inv_scale;
          ++e;
        }
      }
      he = edge_.Step(ad::Constant(std::move(x)), he);
    }
    // mean over each item's edges; items without neighbours get a zero row
    Tensor agg({batch, edges});
    std::size_t e = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double w = sorted[b].empty() ? 0.0 : 1.0 / static_cast<double>(sorted[b].size());
      for (std::size_t i = 0; i < sorted[b].size(); ++i) agg.at(b, e++) = w;
    }
    edge_feat = ad::MatMul(ad::Constant(std::move(agg)), he);
  }
  return ad::Concat({h, edge_feat}, 1);
}

Tensor Encoder::EncodeOne(const Polyline& history,
                          const std::vector<Polyline>& neighbors) const {
  ad::NoGradGuard guard;
  const Polyline h[1] = {history};
  const std::vector<Polyline> nb[1] = {neighbors};
  Var f = Encode(h, nb);
  return f->value.Reshaped({feature_dim()});
}

}  // namespace ctd::encoder
