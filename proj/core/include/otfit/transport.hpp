#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "otfit/costs.hpp"
#include "otfit/dataset.hpp"
#include "otfit/potential.hpp"
#include "otfit/rng.hpp"
#include "otfit/sampler.hpp"

namespace otfit {

/// T(x) = y_argmin_i c(x, y_i) - psi_i for a frozen psi snapshot.
///
/// The map keeps a pointer to the dataset, which must outlive it, and
/// records the generator version it was solved against so FIT can reject a
/// stale plan.
class MongeMap {
 public:
  /// Tie gap below which apply_map perturbs (cost units).
  static constexpr double kTieGap = 1e-12;

  MongeMap(CostSpec spec, const Dataset& targets, std::vector<double> psi,
           std::uint64_t generator_version = 0, double perturbation_sigma = 0.0);
  MongeMap(CostSpec spec, const Dataset& targets, OtsResult&& solved,
           std::uint64_t generator_version = 0, double perturbation_sigma = 0.0);

  const CostSpec& spec() const noexcept { return spec_; }
  const Dataset& targets() const noexcept { return *targets_; }
  std::span<const double> psi() const noexcept { return psi_; }
  std::uint64_t generator_version() const noexcept { return generator_version_; }
  double perturbation_sigma() const noexcept { return perturbation_sigma_; }

  /// Cached (latent, generated, target index) triples from the solve.
  const OtsMemo& memo() const noexcept { return memo_; }

 private:
  CostSpec spec_;
  const Dataset* targets_;
  std::vector<double> psi_;
  std::uint64_t generator_version_;
  double perturbation_sigma_;
  OtsMemo memo_;
};

struct MapResult {
  std::size_t index = 0;
  PointView target;
  bool perturbed = false;
};

/// Argmin target of x. On a near-exact tie with perturbation_sigma > 0, x is
/// jittered once with N(0, sigma^2 I) noise drawn from `rng` and
/// re-evaluated; without an rng ties go to the smallest index.
MapResult apply_map(const MongeMap& map, PointView x, Rng* rng = nullptr);

/// Targets for every row of xs (smallest-index tie-break).
std::vector<std::size_t> apply_map_batch(const MongeMap& map, const PointSet& xs);

/// Monte-Carlo mean and standard error of c(x, T(x)), x ~ sampler.
Estimate transport_cost_estimate(const CostSpec& spec, const PushforwardSampler& sampler, const MongeMap& map,
                                 std::size_t n_samples, Rng& rng);

/// Counts of T(x) over n fresh samples; sums to n.
std::vector<std::uint64_t> assignment_histogram(const MongeMap& map, const PushforwardSampler& sampler,
                                                std::size_t n_samples, Rng& rng);

}  // namespace otfit
