#include "otfit/transport.hpp"

#include <algorithm>
#include <cmath>

#include "otfit/error.hpp"

namespace otfit {

MongeMap::MongeMap(CostSpec spec, const Dataset& targets, std::vector<double> psi, std::uint64_t generator_version,
                   double perturbation_sigma)
    : spec_(spec),
      targets_(&targets),
      psi_(std::move(psi)),
      generator_version_(generator_version),
      perturbation_sigma_(perturbation_sigma) {
  if (psi_.size() != targets.size()) throw InvalidInput("MongeMap: psi length != dataset size");
  if (!std::isfinite(perturbation_sigma) || perturbation_sigma < 0.0) {
    throw InvalidInput("MongeMap: perturbation_sigma must be finite and >= 0");
  }
  for (double v : psi_) {
    if (!std::isfinite(v)) throw InvalidInput("MongeMap: non-finite psi");
  }
}

MongeMap::MongeMap(CostSpec spec, const Dataset& targets, OtsResult&& solved, std::uint64_t generator_version,
                   double perturbation_sigma)
    : MongeMap(spec, targets, std::move(solved.potential.values), generator_version, perturbation_sigma) {
  for (std::size_t t : solved.memo.targets) {
    if (t >= targets.size()) throw InvalidInput("MongeMap: memo target out of range");
  }
  if (solved.memo.size() > 0 && solved.memo.generated.dim() != targets.dim()) {
    throw InvalidInput("MongeMap: memo dimension mismatch");
  }
  memo_ = std::move(solved.memo);
}

MapResult apply_map(const MongeMap& map, PointView x, Rng* rng) {
  const auto& targets = map.targets();
  auto ct = c_transform(map.spec(), x, targets, map.psi());
  MapResult out;
  if (targets.size() > 1 && map.perturbation_sigma() > 0.0 && rng != nullptr &&
      ct.runner_up - ct.value < MongeMap::kTieGap) {
    std::normal_distribution<double> noise(0.0, map.perturbation_sigma());
    Point jittered(x.begin(), x.end());
    for (double& v : jittered) v += noise(*rng);
    ct = c_transform(map.spec(), jittered, targets, map.psi());
    out.perturbed = true;
  }
  out.index = ct.index;
  out.target = targets[ct.index];
  return out;
}

std::vector<std::size_t> apply_map_batch(const MongeMap& map, const PointSet& xs) {
  const auto ct = c_transform_batch(map.spec(), xs, map.targets(), map.psi());
  std::vector<std::size_t> out(ct.size());
  for (std::size_t j = 0; j < ct.size(); ++j) out[j] = ct[j].index;
  return out;
}

Estimate transport_cost_estimate(const CostSpec& spec, const PushforwardSampler& sampler, const MongeMap& map,
                                 std::size_t n_samples, Rng& rng) {
  if (n_samples < 2) throw InvalidInput("transport_cost_estimate: need at least 2 samples");
  constexpr std::size_t kChunk = 4096;
  double sum = 0.0, sq = 0.0;
  for (std::size_t done = 0; done < n_samples;) {
    const std::size_t m = std::min(kChunk, n_samples - done);
    const auto xs = sampler.sample_points(rng, m);
    const auto idx = apply_map_batch(map, xs);
    for (std::size_t j = 0; j < m; ++j) {
      const double c = cost_unchecked(spec, xs.row(j), map.targets()[idx[j]]);
      sum += c;
      sq += c * c;
    }
    done += m;
  }
  const double nn = static_cast<double>(n_samples);
  Estimate e;
  e.mean = sum / nn;
  e.std_error = std::sqrt(std::max(0.0, (sq - nn * e.mean * e.mean) / (nn - 1.0)) / nn);
  return e;
}

std::vector<std::uint64_t> assignment_histogram(const MongeMap& map, const PushforwardSampler& sampler,
                                                std::size_t n_samples, Rng& rng) {
  if (n_samples < 1) throw InvalidInput("assignment_histogram: need at least 1 sample");
  std::vector<std::uint64_t> hist(map.targets().size(), 0);
  constexpr std::size_t kChunk = 4096;
  for (std::size_t done = 0; done < n_samples;) {
    const std::size_t m = std::min(kChunk, n_samples - done);
    for (std::size_t i : apply_map_batch(map, sampler.sample_points(rng, m))) ++hist[i];
    done += m;
  }
  return hist;
}

}  // namespace otfit
