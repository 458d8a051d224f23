#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "otfit/costs.hpp"
#include "otfit/datasets.hpp"
#include "otfit/trainer.hpp"

namespace otfit {

struct DataConfig {
  /// ring, line, gmm, moons (synthetic) or idx, csv (files).
  std::string kind = "ring";
  SyntheticSpec synthetic;
  std::filesystem::path path;
  std::filesystem::path test_path;
  std::size_t limit = 1000;
  std::size_t test_limit = 200;
  /// Held-out synthetic split: same geometry, this seed and size
  /// (test_points = 0 disables it).
  std::uint64_t test_seed = 1;
  std::size_t test_points = 0;
  NormalizeMode normalize = NormalizeMode::None;
};

struct NetConfig {
  std::vector<int> hidden = {64, 64};
  /// Initial generator: "none" (random init), "line", an L2 prefit of
  /// z -> (scale_x z_0, scale_y z_1, ...), or "pca", an L2 prefit of
  /// z -> data mean + top principal axes scaled by their std devs.
  std::string prefit = "none";
  std::int64_t prefit_steps = 2000;
  double prefit_learning_rate = 1e-2;
  double prefit_scale_x = 0.5;
  double prefit_scale_y = 0.05;
};

struct PsiConfig {
  std::vector<int> hidden = {64, 64, 64, 64};
  std::int64_t steps = 3000;
  double learning_rate = 1e-3;
  bool cosine_decay = true;  ///< anneal the learning rate to 0 over `steps`
  int smoothing = 50;
  std::size_t scatter_points = 100;
};

struct RunConfig {
  CostSpec cost{Metric::L1, 1.0};
  DataConfig data;
  NetConfig net;
  TrainConfig train;
  PsiConfig psi;
  std::filesystem::path output_dir = "run";
  /// Generated points written to samples.csv after training.
  std::size_t dump_samples = 2000;
};

/// Parses flat key = value text with [section] headers (cost, data, latent,
/// net, ots, eval, fit, train, psi). '#' starts a comment. Unknown keys,
/// duplicates and bad values throw ConfigError with the line and key.
RunConfig parse_run_config(std::string_view text);

/// Reads and parses a file; relative data paths are resolved against its
/// directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Every setting in parseable form (round-trips through parse_run_config).
std::string resolved_config(const RunConfig& config);

}  // namespace otfit
