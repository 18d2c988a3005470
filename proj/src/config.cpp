#include "ctd/config.hpp"

#include <fstream>
#include <set>

#include "ctd/diffusion.hpp"
#include "ctd/error.hpp"

namespace ctd {

using nlohmann::json;

namespace {

// Reads the keys of one section, rejecting any it does not know about.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw UsageError("bad_config", "section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key))
        throw UsageError("unknown_key", "unknown config key '" + path(key) + "'");
  }

  template <typename T>
  void Get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw UsageError("bad_config", "config key '" + path(key) + "' has the wrong type");
    }
  }

  const json& Child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? kEmpty : *it;
  }

  std::string path(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

 private:
  static inline const json kEmpty = json::object();
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void Check(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw UsageError("bad_config", "config value '" + key + "' must be " + rule);
}

}  // namespace

Config ConfigFromJson(const json& j) {
  Config c;
  Section top(j, "");
  top.Get("seed", c.seed);
  {
    Section s(top.Child("data"), "data");
    auto& d = c.data;
    s.Get("n", d.n);
    s.Get("m", d.m);
    s.Get("dt", d.dt);
    s.Get("jitter_sigma", d.jitter_sigma);
    s.Get("slow_down_tie", d.slow_down_tie);
    s.Get("turn_tie", d.turn_tie);
    s.Get("pair_fraction", d.pair_fraction);
    s.Get("pairs_per_history", d.pairs_per_history);
    s.Get("test_fraction", d.test_fraction);
    s.Get("frame_rate", d.frame_rate);
    s.Get("neighbor_radius", d.neighbor_radius);
    s.Get("max_neighbors", d.max_neighbors);
    s.Get("v_max", d.v_max);
  }
  {
    Section s(top.Child("encoder"), "encoder");
    s.Get("ego_hidden", c.encoder.ego_hidden);
    s.Get("edge_hidden", c.encoder.edge_hidden);
  }
  {
    Section s(top.Child("scorer"), "scorer");
    auto& sc = c.scorer;
    s.Get("hidden", sc.hidden);
    s.Get("lambda", sc.lambda);
    s.Get("grid_size", sc.grid_size);
    s.Get("bandwidth", sc.bandwidth);
    s.Get("normalize_entropy", sc.normalize_entropy);
    s.Get("epochs", sc.epochs);
    s.Get("batch_size", sc.batch_size);
    s.Get("lr", sc.lr);
    s.Get("freeze_encoder", sc.freeze_encoder);
    s.Get("holdout_fraction", sc.holdout_fraction);
  }
  {
    Section s(top.Child("diffusion"), "diffusion");
    auto& df = c.diffusion;
    s.Get("steps", df.steps);
    s.Get("beta_start", df.beta_start);
    s.Get("beta_end", df.beta_end);
    s.Get("schedule", df.schedule);
    s.Get("width", df.width);
    s.Get("heads", df.heads);
    s.Get("depth", df.depth);
    s.Get("ffn", df.ffn);
    s.Get("time_dim", df.time_dim);
    s.Get("cond_dim", df.cond_dim);
    s.Get("epochs", df.epochs);
    s.Get("batch_size", df.batch_size);
    s.Get("lr", df.lr);
    s.Get("clip_norm", df.clip_norm);
    s.Get("sample_mode", df.sample_mode);
  }
  {
    Section s(top.Child("eval"), "eval");
    s.Get("n_c", c.eval.n_c);
    s.Get("n_s", c.eval.n_s);
    s.Get("grid_size", c.eval.grid_size);
    s.Get("draws", c.eval.draws);
    s.Get("max_histories", c.eval.max_histories);
  }
  ValidateConfig(c);
  return c;
}

json ConfigToJson(const Config& c) {
  const auto& d = c.data;
  const auto& sc = c.scorer;
  const auto& df = c.diffusion;
  return json{
      {"seed", c.seed},
      {"data",
       {{"n", d.n}, {"m", d.m}, {"dt", d.dt}, {"jitter_sigma", d.jitter_sigma},
        {"slow_down_tie", d.slow_down_tie}, {"turn_tie", d.turn_tie},
        {"pair_fraction", d.pair_fraction}, {"pairs_per_history", d.pairs_per_history},
        {"test_fraction", d.test_fraction}, {"frame_rate", d.frame_rate},
        {"neighbor_radius", d.neighbor_radius}, {"max_neighbors", d.max_neighbors},
        {"v_max", d.v_max}}},
      {"encoder", {{"ego_hidden", c.encoder.ego_hidden}, {"edge_hidden", c.encoder.edge_hidden}}},
      {"scorer",
       {{"hidden", sc.hidden}, {"lambda", sc.lambda}, {"grid_size", sc.grid_size},
        {"bandwidth", sc.bandwidth}, {"normalize_entropy", sc.normalize_entropy},
        {"epochs", sc.epochs}, {"batch_size", sc.batch_size}, {"lr", sc.lr},
        {"freeze_encoder", sc.freeze_encoder}, {"holdout_fraction", sc.holdout_fraction}}},
      {"diffusion",
       {{"steps", df.steps}, {"beta_start", df.beta_start}, {"beta_end", df.beta_end},
        {"schedule", df.schedule}, {"width", df.width}, {"heads", df.heads},
        {"depth", df.depth}, {"ffn", df.ffn}, {"time_dim", df.time_dim},
        {"cond_dim", df.cond_dim}, {"epochs", df.epochs}, {"batch_size", df.batch_size},
        {"lr", df.lr}, {"clip_norm", df.clip_norm}, {"sample_mode", df.sample_mode}}},
      {"eval",
       {{"n_c", c.eval.n_c}, {"n_s", c.eval.n_s}, {"grid_size", c.eval.grid_size},
        {"draws", c.eval.draws}, {"max_histories", c.eval.max_histories}}}};
}

void ValidateConfig(const Config& c) {
  const auto& d = c.data;
  Check(d.n >= 2, "data.n", ">= 2");
  Check(d.m >= 1, "data.m", ">= 1");
  Check(d.dt > 0, "data.dt", "> 0");
  Check(d.jitter_sigma >= 0, "data.jitter_sigma", ">= 0");
  Check(d.slow_down_tie >= 0, "data.slow_down_tie", ">= 0");
  Check(d.turn_tie >= 0, "data.turn_tie", ">= 0");
  Check(d.pair_fraction > 0 && d.pair_fraction <= 1, "data.pair_fraction", "in (0, 1]");
  Check(d.pairs_per_history >= 1, "data.pairs_per_history", ">= 1");
  Check(d.test_fraction >= 0 && d.test_fraction < 1, "data.test_fraction", "in [0, 1)");
  Check(d.frame_rate > 0, "data.frame_rate", "> 0");
  Check(d.neighbor_radius > 0, "data.neighbor_radius", "> 0");
  Check(d.max_neighbors >= 0, "data.max_neighbors", ">= 0");
  Check(d.v_max > 0, "data.v_max", "> 0");

  Check(c.encoder.ego_hidden >= 1, "encoder.ego_hidden", ">= 1");
  Check(c.encoder.edge_hidden >= 1, "encoder.edge_hidden", ">= 1");

  const auto& s = c.scorer;
  for (int h : s.hidden) Check(h >= 1, "scorer.hidden", "a list of positive sizes");
  Check(s.lambda >= 0, "scorer.lambda", ">= 0");
  Check(s.grid_size >= 2, "scorer.grid_size", ">= 2");
  Check(s.bandwidth > 0, "scorer.bandwidth", "> 0");
  Check(s.epochs >= 0, "scorer.epochs", ">= 0");
  Check(s.batch_size >= 1, "scorer.batch_size", ">= 1");
  Check(s.lr > 0, "scorer.lr", "> 0");
  Check(s.holdout_fraction >= 0 && s.holdout_fraction < 1, "scorer.holdout_fraction", "in [0, 1)");

  const auto& f = c.diffusion;
  Check(f.steps >= 1, "diffusion.steps", ">= 1");
  Check(f.beta_start > 0 && f.beta_start <= f.beta_end && f.beta_end < 1,
        "diffusion.beta_start/beta_end", "0 < start <= end < 1");
  diffusion::ParseScheduleKind(f.schedule);
  diffusion::ParseSampleMode(f.sample_mode);
  Check(f.width >= 1 && f.heads >= 1 && f.width % f.heads == 0, "diffusion.width",
        "a positive multiple of diffusion.heads");
  Check(f.depth >= 0, "diffusion.depth", ">= 0");
  Check(f.ffn >= 1, "diffusion.ffn", ">= 1");
  Check(f.time_dim >= 2 && f.time_dim % 2 == 0, "diffusion.time_dim", "even and >= 2");
  Check(f.cond_dim >= 1, "diffusion.cond_dim", ">= 1");
  Check(f.epochs >= 0, "diffusion.epochs", ">= 0");
  Check(f.batch_size >= 1, "diffusion.batch_size", ">= 1");
  Check(f.lr > 0, "diffusion.lr", "> 0");
  Check(f.clip_norm >= 0, "diffusion.clip_norm", ">= 0");

  Check(c.eval.n_c >= 1, "eval.n_c", ">= 1");
  Check(c.eval.n_s >= 1, "eval.n_s", ">= 1");
  Check(c.eval.grid_size >= 2, "eval.grid_size", ">= 2");
  Check(c.eval.draws >= 1, "eval.draws", ">= 1");
  Check(c.eval.max_histories >= 0, "eval.max_histories", ">= 0");
}

Config LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("io", "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("bad_config", path + ": " + e.what());
  }
  return ConfigFromJson(j);
}

}  // namespace ctd
