#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "otfit/config.hpp"
#include "otfit/datasets.hpp"
#include "otfit/netcore.hpp"
#include "otfit/potential.hpp"
#include "otfit/sampler.hpp"

namespace otfit {

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
  AffineTransform transform;  ///< fitted on train, applied to both
};

/// Builds the train (and optional held-out) datasets described by `data`.
LoadedData load_data(const DataConfig& data);

/// Xavier-initialised generator latent -> hidden... -> output_dim, then the
/// optional prefit from `net`. Deterministic in `seed`. The "pca" prefit
/// reads `data` (the training set) and throws InvalidInput without it.
Generator make_initial_generator(const RunConfig& config, int output_dim, std::uint64_t seed,
                                 const Dataset* data = nullptr);

struct WdConfig {
  OtsConfig ots;
  std::size_t samples = 20000;
  double plateau_tolerance = 1e-5;
};

WdConfig wd_config(const RunConfig& config);

struct WdReport {
  double wd = 0.0;  ///< dual objective, cost units (W_p^p)
  double std_error = 0.0;
  double wd_root = 0.0;  ///< wd^(1/p)
  std::int64_t ots_steps = 0;
  StopReason stop = StopReason::MaxSteps;
};

/// Evaluation-grade solve from psi = 0 followed by a fresh-sample dual
/// estimate. Deterministic in `seed`.
WdReport eval_wd(const CostSpec& spec, const PushforwardSampler& sampler, const Dataset& dataset,
                 const WdConfig& config, std::uint64_t seed);

struct AblationReport {
  double initial_wd = 0.0;
  double alternating_wd = 0.0;
  double alternating_stderr = 0.0;
  double nonalternating_wd = 0.0;
  double nonalternating_stderr = 0.0;
  std::int64_t fit_step_budget = 0;
  int outer_iterations_run = 0;
};

/// (a) alternating training for config.train.outer_iterations rounds,
/// (b) one solve on g0 followed by FIT for the same total number of FIT
/// steps. Both final generators are scored with the same evaluation seed.
AblationReport run_ablation(const RunConfig& config, const Dataset& dataset, const Generator& g0, std::uint64_t seed);

struct PsiScatterRow {
  bool train = true;
  double psi = 0.0;  ///< NaN on the test split (no ground truth)
  double fitted = 0.0;
};

struct VerifyPsiReport {
  std::vector<double> loss_trace;     ///< per step, psi units squared
  std::vector<double> smoothed_loss;  ///< block means
  /// No block mean exceeds its predecessor by more than
  /// (float epsilon * psi_scale)^2.
  bool smoothed_non_increasing = false;
  double train_mse = 0.0;
  double psi_scale = 0.0;  ///< standard deviation of psi (or max |psi| when constant)
  double correlation = 0.0;
  std::vector<double> test_predictions;
  std::vector<PsiScatterRow> scatter;
};

/// Fits an MLP regressor y_i -> psi_i by full-batch Adam on squared error.
VerifyPsiReport verify_psi(const Dataset& train, std::span<const double> psi, const Dataset* test,
                           const PsiConfig& config, std::uint64_t seed);

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace otfit
