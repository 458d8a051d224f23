#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "otfit/costs.hpp"
#include "otfit/dataset.hpp"
#include "otfit/fitting.hpp"
#include "otfit/netcore.hpp"
#include "otfit/potential.hpp"
#include "otfit/sampler.hpp"
#include "otfit/transport.hpp"

namespace otfit {

struct TrainConfig {
  /// Precision split between OTS and FIT, in (0, 1/2). FIT stops at loss
  /// fraction 1 - 2 alpha.
  double alpha = 0.25;
  int outer_iterations = 10;
  OtsConfig ots;
  FitConfig fit;  ///< target_loss_fraction is overridden
  LatentSource latent = LatentSource::uniform_box(2, -1.0, 1.0);
  double perturbation_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Monte-Carlo samples for the cost estimate.
  std::size_t eval_samples = 20000;
  /// Evaluation solve: warm-started from the training psi, tighter plateau.
  bool evaluate_each_iteration = true;
  double eval_plateau_tolerance = 1e-5;
  std::int64_t eval_max_steps = 0;  ///< 0 = ots.max_steps
  /// Fresh samples for the post-solve assignment histogram (0 = 400 N).
  std::size_t histogram_samples = 0;
  /// Compute eps_ot2 with the exact oracle (needs N <= 512).
  bool estimate_eps_ot2 = true;
  /// Start each training solve from the previous psi.
  bool warm_start_psi = true;
  /// Evaluate the returned generator after the loop.
  bool final_evaluation = true;

  /// Early stop when |c_i - c_{i-w}| / c_{i-w} < tolerance.
  double cost_plateau_tolerance = 1e-3;
  int cost_plateau_window = 3;

  int checkpoint_every = 0;  ///< 0 disables
  std::filesystem::path checkpoint_dir;
  std::filesystem::path metrics_path;  ///< empty disables the log
  bool record_wall_time = true;        ///< false writes wall_ms = 0

  double fit_target_fraction() const noexcept { return 1.0 - 2.0 * alpha; }
  void validate() const;
  /// Fingerprint of every field that affects the diagnostics stream
  /// (not outer_iterations or output locations).
  std::uint64_t hash() const;
};

struct IterationDiagnostics {
  std::int64_t iter = 0;
  double cost_estimate = 0.0;  ///< T_c(g_i # mu, nu) estimate
  double cost_stderr = 0.0;
  std::optional<double> eps_ot2;  ///< oracle cost^beta of the mapped histogram vs nu
  double eps_fit = 0.0;           ///< final FIT loss^beta
  std::optional<double> contraction_ratio;  ///< cost^beta_i / cost^beta_{i-1}, i >= 1
  std::optional<double> histogram_tv;
  std::int64_t ots_steps = 0;
  StopReason ots_stop = StopReason::MaxSteps;
  std::int64_t fit_steps = 0;
  double fit_initial_loss = 0.0;
  FitStop fit_stop = FitStop::MaxSteps;
  double wall_ms = 0.0;

  friend bool operator==(const IterationDiagnostics&, const IterationDiagnostics&) = default;
};

/// Run state at an outer-iteration boundary.
struct Checkpoint {
  Generator generator;
  std::vector<double> psi;  ///< stored as float32
  std::uint64_t next_iteration = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<IterationDiagnostics> diagnostics;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// "OTCK", u32 version, generator block, u32 N + float32 psi, u64 next
/// iteration, u64 seed, u64 config hash, u32 row count + diagnostics rows.
void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint checkpoint_load(const std::filesystem::path& path);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t next_iteration);

struct TrainResult {
  Generator generator;
  std::vector<IterationDiagnostics> diagnostics;
  std::vector<double> psi;  ///< last training potential
  std::optional<Estimate> final_cost;
  bool stopped_on_plateau = false;
  std::int64_t total_fit_steps = 0;
};

using IterationObserver = std::function<void(const IterationDiagnostics&)>;

/// Alternates OTS and FIT for config.outer_iterations rounds from g0.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const CostSpec& spec, const Generator& g0,
                  const IterationObserver& observer = {});

/// Continues from a checkpoint. Throws InvalidInput when its seed or config
/// hash differ from `config`.
TrainResult resume(const TrainConfig& config, const Dataset& dataset, const CostSpec& spec, const Checkpoint& ck,
                   const IterationObserver& observer = {});

/// Exact OT cost^beta between the histogram measure on the targets and the
/// uniform measure on them.
double eps_ot2_from_histogram(const CostSpec& spec, const Dataset& dataset, std::span<const std::uint64_t> hist);

/// Draws M samples, maps them, and returns eps_ot2_from_histogram.
double estimate_eps_ot2(const MongeMap& map, const PushforwardSampler& sampler, const Dataset& dataset,
                        std::size_t m, Rng& rng);

/// iter,cost_estimate,eps_ot2,eps_fit,contraction_ratio,wall_ms followed
/// by cost_stderr,histogram_tv,ots_steps,fit_steps. Absent values are
/// empty fields.
void write_metrics(const std::filesystem::path& path, std::span<const IterationDiagnostics> rows);
std::string metrics_header();
std::string metrics_row(const IterationDiagnostics& d);

}  // namespace otfit
