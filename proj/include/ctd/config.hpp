#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace ctd {

struct DataConfig {
  int n = 8;
  int m = 12;
  double dt = 0.4;
  double jitter_sigma = 0.03;
  double slow_down_tie = 0.1;
  double turn_tie = 0.087;
  double pair_fraction = 0.01;
  int pairs_per_history = 1;
  double test_fraction = 0.2;
  double frame_rate = 25.0;
  double neighbor_radius = 5.0;
  int max_neighbors = 8;
  double v_max = 4.0;
};

struct EncoderConfig {
  int ego_hidden = 64;
  int edge_hidden = 32;
};

struct ScorerConfig {
  std::vector<int> hidden{64, 32, 16};
  double lambda = 0.1;
  int grid_size = 20;
  double bandwidth = 0.05;
  bool normalize_entropy = true;
  int epochs = 150;
  int batch_size = 32;
  double lr = 1e-3;
  bool freeze_encoder = false;
  double holdout_fraction = 0.2;
};

struct DiffusionConfig {
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.05;
  std::string schedule = "linear";
  int width = 64;
  int heads = 4;
  int depth = 2;
  int ffn = 128;
  int time_dim = 32;
  int cond_dim = 32;
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-3;
  double clip_norm = 1.0;
  std::string sample_mode = "ancestral";
};

struct EvalConfig {
  int n_c = 20;
  int n_s = 20;
  int grid_size = 20;
  int draws = 4;           // samples per history per grid value in sweeps
  int max_histories = 50;  // 0 means the whole split
};

struct Config {
  std::uint64_t seed = 0;
  DataConfig data;
  EncoderConfig encoder;
  ScorerConfig scorer;
  DiffusionConfig diffusion;
  EvalConfig eval;
};

/// Missing keys keep their defaults; unknown keys and out-of-range values
/// raise a usage error naming the key.
Config ConfigFromJson(const nlohmann::json& j);
nlohmann::json ConfigToJson(const Config& config);
Config LoadConfig(const std::string& path);
void ValidateConfig(const Config& config);

}  // namespace ctd
