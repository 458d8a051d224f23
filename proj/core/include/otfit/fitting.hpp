#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otfit/costs.hpp"
#include "otfit/dataset.hpp"
#include "otfit/netcore.hpp"
#include "otfit/rng.hpp"
#include "otfit/sampler.hpp"
#include "otfit/transport.hpp"

namespace otfit {

enum class FitOptimizer { Sgd, Adam };

std::string to_string(FitOptimizer o);
FitOptimizer parse_fit_optimizer(const std::string& text);

struct FitConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::int64_t max_steps = 5000;
  /// Stop once loss^beta <= fraction * initial loss^beta.
  double target_loss_fraction = 0.5;
  bool reuse_memoized = true;

  /// Evaluation-set loss is measured every `check_every` steps.
  int check_every = 50;
  std::size_t eval_pairs = 4096;
  /// Stop when `plateau_patience` consecutive checks improve the
  /// evaluation loss by less than this (relative). 0 disables.
  double plateau_tolerance = 1e-4;
  int plateau_patience = 5;

  FitOptimizer optimizer = FitOptimizer::Sgd;
  double momentum = 0.0;  ///< Sgd only

  void validate() const;
};

/// (latent, frozen target) pairs, one per column / row.
struct FitPairs {
  Eigen::MatrixXf latents;  ///< d_z x n
  PointSet targets;         ///< n x D

  std::size_t size() const noexcept { return targets.size(); }
};

enum class FitStop { TargetReached, MaxSteps, Plateau };

std::string to_string(FitStop s);

struct FitReport {
  double initial_loss = 0.0;  ///< mean cost on the evaluation pairs
  double final_loss = 0.0;
  double initial_loss_beta = 0.0;
  double final_loss_beta = 0.0;
  std::int64_t steps = 0;
  std::size_t memo_pairs_used = 0;
  FitStop stop_reason = FitStop::MaxSteps;
  std::vector<double> loss_trace;  ///< evaluation loss at each check
};

struct FitResult {
  Generator generator;
  FitReport report;
};

/// Mean c(g(z_j), target_j). Throws InvalidInput on empty pairs or a
/// dimension mismatch.
double fit_loss(const CostSpec& spec, const Generator& g, const FitPairs& pairs);

/// Regresses a copy of g_old toward T(g_old(z)). `sampler` must push
/// through g_old; memo pairs of `map` are consumed first (when
/// reuse_memoized), then fresh latents mapped through the frozen g_old and
/// map. Throws InvalidInput on a stale map and SolverAbort on divergence
/// (loss above 10x the initial loss for 100 consecutive steps).
FitResult fit_solve(const CostSpec& spec, const PushforwardSampler& sampler, const Generator& g_old,
                    const MongeMap& map, const FitConfig& config, Rng& rng);

/// Pairs for n fresh latents: z ~ mu, target = T(g_old(z)).
FitPairs draw_fit_pairs(const PushforwardSampler& sampler, const MongeMap& map, std::size_t n, Rng& rng);

}  // namespace otfit
