#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "otfit/costs.hpp"
#include "otfit/dataset.hpp"
#include "otfit/rng.hpp"
#include "otfit/sampler.hpp"

namespace otfit {

/// Dual vector psi over the N targets plus the optimiser settings that
/// produced it.
struct Potential {
  std::vector<double> values;
  std::int64_t steps_taken = 0;
  double learning_rate = 1e-4;
  int batch_size = 64;

  static Potential zeros(std::size_t n, double learning_rate = 1e-4, int batch_size = 64);
  std::size_t size() const noexcept { return values.size(); }
};

enum class LrSchedule {
  Constant,
  /// Multiply eta by `lr_decay_factor` at the end of every full-set window
  /// whose assignment histogram did not get closer to uniform.
  HalveOnStall,
};

enum class StopReason { HistogramUniform, MaxSteps, ObjectivePlateau };

std::string to_string(StopReason r);
std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& text);

struct OtsConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  std::int64_t max_steps = 20000;

  /// The assignment histogram is measured over windows of
  /// max(window_batches, ceil(window_samples_per_target * N / B)) batches;
  /// the multinomial TV floor of a window of S samples is ~0.4 sqrt(N / S).
  int window_batches = 50;
  double window_samples_per_target = 200.0;
  double histogram_tolerance = 0.05;

  /// Stop when the window objective changes by less than this (relative)
  /// for `plateau_patience` consecutive windows. 0 disables.
  double plateau_tolerance = 1e-4;
  int plateau_patience = 3;

  /// Subsample schedule: active fraction grows geometrically from
  /// subsample_start to 1 over subsample_horizon steps in subsample_stages
  /// stages. subsample_start = 1 disables it.
  double subsample_start = 1.0;
  std::int64_t subsample_horizon = 0;
  int subsample_stages = 8;

  LrSchedule lr_schedule = LrSchedule::Constant;
  double lr_decay_factor = 0.5;
  double lr_min = 0.0;
  /// Relative TV improvement a window must achieve to keep the rate.
  double lr_min_improvement = 0.1;

  /// Return the mean iterate of the final window instead of the last one.
  bool averaging = false;
  /// Measure each full-set window's histogram under a frozen snapshot of
  /// psi (the previous window's result) instead of the moving iterate, and
  /// return that snapshot when it passes the histogram check.
  bool snapshot_check = false;
  /// Keep the final window's (latent, sample, target) triples for FIT.
  bool memorize = true;
  /// Upper bound on memorised samples (the first ones of the window).
  std::size_t memo_capacity = 65536;

  /// Throws InvalidInput on out-of-range values.
  void validate() const;
  std::size_t window_size(std::size_t n_targets) const;
};

/// Per-step semi-discrete dual objective on one batch.
struct BatchLoss {
  double loss = 0.0;
  /// Gradient w.r.t. psi, length N; zero outside the active set.
  std::vector<double> grad;
  std::vector<std::size_t> assignment;
};

/// loss = (1/B) sum_j min_{i in active} (c(x_j, y_i) - psi_i) + (1/N') sum_{i in active} psi_i
/// grad_i = -count_i / B + 1/N' for active i. Ascending this loss along
/// grad is the OTS update. `active` empty means all N targets.
BatchLoss ots_batch_loss(const CostSpec& spec, const PointSet& batch, const Dataset& targets,
                         std::span<const double> psi, std::span<const std::size_t> active = {});

/// Total-variation distance between normalised counts and uniform(1/N).
/// Throws InvalidInput on an all-zero or empty histogram.
double histogram_tv(std::span<const std::uint64_t> hist);

/// True iff histogram_tv(hist) <= tolerance. tolerance must be in (0, 1).
bool histogram_stop_check(std::span<const std::uint64_t> hist, double tolerance);

/// Active index sets for the subsample speed-up. Sets are drawn once per
/// stage from `seed` and are sorted.
class SubsampleSchedule {
 public:
  SubsampleSchedule(const OtsConfig& config, std::size_t n_targets, std::uint64_t seed);

  /// Indices active at `step`; empty span means the full set.
  std::span<const std::size_t> active(std::int64_t step);
  double fraction(std::int64_t step) const;
  bool full(std::int64_t step) const;

 private:
  std::size_t stage_of(std::int64_t step) const;
  std::size_t stage_size(std::size_t stage) const;

  double start_;
  std::int64_t horizon_;
  int stages_;
  std::size_t n_;
  std::uint64_t seed_;
  std::size_t cached_stage_ = static_cast<std::size_t>(-1);
  std::vector<std::size_t> cached_;
};

/// Free-function form: the materialised active set (all N indices at or
/// after the horizon).
std::vector<std::size_t> subsample_schedule(std::int64_t step, const OtsConfig& config,
                                            std::size_t n_targets, std::uint64_t seed);

struct OtsReport {
  double dual_objective_estimate = 0.0;  ///< mean batch loss over the final window
  double dual_objective_stderr = 0.0;
  std::vector<double> batch_loss_trace;
  std::vector<std::uint64_t> assignment_histogram;  ///< final window
  std::vector<double> subsample_fraction_trace;     ///< per step
  std::vector<double> histogram_tv_trace;           ///< per completed full-set window
  StopReason stop_reason = StopReason::MaxSteps;
  std::int64_t steps = 0;
  double final_learning_rate = 0.0;
};

/// Batches of the final OTS window with their targets.
struct OtsMemo {
  Eigen::MatrixXf latents;  ///< d_z x M
  PointSet generated;       ///< M x D
  std::vector<std::size_t> targets;

  std::size_t size() const noexcept { return targets.size(); }
};

struct OtsResult {
  Potential potential;
  OtsReport report;
  OtsMemo memo;
};

/// Stochastic ascent on the semi-discrete dual. Starts from
/// `initial_psi` when given, zeros otherwise. Throws InvalidInput on a bad
/// config or dimension mismatch and SolverAbort on a non-finite loss.
OtsResult ots_solve(const CostSpec& spec, const PushforwardSampler& sampler, const Dataset& targets,
                    const OtsConfig& config, Rng& rng, std::span<const double> initial_psi = {});

/// Exact dual objective for a discrete source:
/// sum_m w_m min_i (c(x_m, y_i) - psi_i) + (1/N) sum_i psi_i.
/// Empty `weights` means uniform.
double dual_objective(const CostSpec& spec, const PointSet& source, std::span<const double> weights,
                      const Dataset& targets, std::span<const double> psi);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo dual objective with fresh samples at fixed psi. By weak
/// duality its expectation lower-bounds the transport cost.
Estimate dual_objective_estimate(const CostSpec& spec, const PushforwardSampler& sampler,
                                 const Dataset& targets, std::span<const double> psi,
                                 std::size_t n_samples, Rng& rng);

}  // namespace otfit
