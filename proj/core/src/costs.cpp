#include "otfit/costs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otfit/error.hpp"
#include "otfit/parallel.hpp"

namespace otfit {

std::string to_string(Metric m) { return m == Metric::L1 ? "l1" : "l2"; }

Metric parse_metric(const std::string& text) {
  if (text == "l1" || text == "L1") return Metric::L1;
  if (text == "l2" || text == "L2") return Metric::L2;
  throw InvalidInput("unknown metric '" + text + "' (expected l1 or l2)");
}

CostSpec::CostSpec(Metric metric, double exponent) : metric_(metric), exponent_(exponent) {
  if (!std::isfinite(exponent) || exponent < 1.0) {
    throw InvalidInput("cost exponent p must be finite and >= 1");
  }
}

namespace {

double l1_distance(const double* x, const double* y, std::size_t d) noexcept {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t k = 0; k < d; ++k) s += std::abs(x[k] - y[k]);
  return s;
}

double l2_squared(const double* x, const double* y, std::size_t d) noexcept {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t k = 0; k < d; ++k) {
    const double t = x[k] - y[k];
    s += t * t;
  }
  return s;
}

void check_pair(PointView x, PointView y) {
  if (x.size() != y.size()) throw InvalidInput("cost: dimension mismatch");
  if (x.empty()) throw InvalidInput("cost: zero-dimensional point");
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("cost: non-finite coordinate");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw InvalidInput("cost: non-finite coordinate");
  }
}

}  // namespace

double cost_unchecked(const CostSpec& spec, PointView x, PointView y) noexcept {
  const std::size_t d = x.size();
  const double p = spec.exponent();
  if (spec.metric() == Metric::L1) {
    const double dist = l1_distance(x.data(), y.data(), d);
    return p == 1.0 ? dist : std::pow(dist, p);
  }
  const double sq = l2_squared(x.data(), y.data(), d);
  if (p == 2.0) return sq;
  if (p == 1.0) return std::sqrt(sq);
  return std::pow(sq, 0.5 * p);
}

double cost(const CostSpec& spec, PointView x, PointView y) {
  check_pair(x, y);
  return cost_unchecked(spec, x, y);
}

void cost_gradient_x(const CostSpec& spec, PointView x, PointView y, std::span<double> out) {
  if (x.size() != y.size() || out.size() != x.size()) {
    throw InvalidInput("cost_gradient_x: dimension mismatch");
  }
  const std::size_t d = x.size();
  const double p = spec.exponent();
  if (spec.metric() == Metric::L1) {
    // d/dx_k (sum|x-y|)^p = p * dist^(p-1) * sign(x_k - y_k)
    const double scale = p == 1.0 ? 1.0 : p * std::pow(l1_distance(x.data(), y.data(), d), p - 1.0);
    for (std::size_t k = 0; k < d; ++k) {
      const double t = x[k] - y[k];
      out[k] = t > 0.0 ? scale : (t < 0.0 ? -scale : 0.0);
    }
    return;
  }
  // d/dx ||x-y||^p = p * ||x-y||^(p-2) * (x - y)
  const double sq = l2_squared(x.data(), y.data(), d);
  double scale;
  if (p == 2.0) {
    scale = 2.0;
  } else if (sq == 0.0) {
    scale = 0.0;
  } else {
    scale = p * std::pow(sq, 0.5 * (p - 2.0));
  }
  for (std::size_t k = 0; k < d; ++k) out[k] = scale * (x[k] - y[k]);
}

Point cost_gradient_x(const CostSpec& spec, PointView x, PointView y) {
  Point g(x.size());
  cost_gradient_x(spec, x, y, g);
  return g;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Folds targets index_at(k), k in [begin, end), into `best`.
template <class IndexAt>
void scan_range(const CostSpec& spec, PointView x, const Dataset& targets, std::span<const double> psi,
                std::size_t begin, std::size_t end, IndexAt index_at, CTransform& best) noexcept {
  const std::size_t d = x.size();
  const double* base = targets.points().data().data();
  const bool l1p1 = spec.metric() == Metric::L1 && spec.exponent() == 1.0;
  const bool l2p2 = spec.metric() == Metric::L2 && spec.exponent() == 2.0;
  for (std::size_t k = begin; k < end; ++k) {
    const std::size_t i = index_at(k);
    const double* y = base + i * d;
    double c;
    if (l1p1) {
      c = l1_distance(x.data(), y, d);
    } else if (l2p2) {
      c = l2_squared(x.data(), y, d);
    } else {
      c = cost_unchecked(spec, x, PointView(y, d));
    }
    const double v = c - psi[i];
    if (v < best.value) {
      best.runner_up = best.value;
      best.value = v;
      best.index = i;
    } else if (v < best.runner_up) {
      best.runner_up = v;
    }
  }
}

template <class IndexAt>
CTransform scan(const CostSpec& spec, PointView x, const Dataset& targets,
                std::span<const double> psi, std::size_t count, IndexAt index_at) noexcept {
  CTransform best{kInf, 0, kInf};
  scan_range(spec, x, targets, psi, 0, count, index_at, best);
  if (count == 1) best.runner_up = best.value;
  return best;
}

/// Rows [b, e) of xs against all targets, in target blocks that stay in
/// cache across rows. Each row still sees targets in ascending order.
template <class IndexAt>
void scan_rows(const CostSpec& spec, const PointSet& xs, std::size_t b, std::size_t e, const Dataset& targets,
               std::span<const double> psi, std::size_t count, IndexAt index_at, CTransform* out) noexcept {
  constexpr std::size_t kBlockBytes = 1u << 17;
  const std::size_t block = std::max<std::size_t>(1, kBlockBytes / (targets.dim() * sizeof(double)));
  for (std::size_t j = b; j < e; ++j) out[j] = CTransform{kInf, 0, kInf};
  for (std::size_t k0 = 0; k0 < count; k0 += block) {
    const std::size_t k1 = std::min(count, k0 + block);
    for (std::size_t j = b; j < e; ++j) scan_range(spec, xs.row(j), targets, psi, k0, k1, index_at, out[j]);
  }
  if (count == 1) {
    for (std::size_t j = b; j < e; ++j) out[j].runner_up = out[j].value;
  }
}

}  // namespace

CTransform c_transform_over(const CostSpec& spec, PointView x, const Dataset& targets,
                            std::span<const double> psi,
                            std::span<const std::size_t> active) noexcept {
  if (active.empty()) {
    return scan(spec, x, targets, psi, targets.size(), [](std::size_t k) { return k; });
  }
  return scan(spec, x, targets, psi, active.size(), [&](std::size_t k) { return active[k]; });
}

CTransform c_transform(const CostSpec& spec, PointView x, const Dataset& targets,
                       std::span<const double> psi) {
  if (targets.size() == 0) throw InvalidInput("c_transform: empty dataset");
  if (psi.size() != targets.size()) throw InvalidInput("c_transform: psi length != dataset size");
  if (x.size() != targets.dim()) throw InvalidInput("c_transform: dimension mismatch");
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("c_transform: non-finite coordinate");
  }
  return c_transform_over(spec, x, targets, psi, {});
}

std::vector<CTransform> c_transform_batch(const CostSpec& spec, const PointSet& xs,
                                          const Dataset& targets, std::span<const double> psi,
                                          std::span<const std::size_t> active) {
  if (targets.size() == 0) throw InvalidInput("c_transform: empty dataset");
  if (psi.size() != targets.size()) throw InvalidInput("c_transform: psi length != dataset size");
  if (xs.dim() != targets.dim()) throw InvalidInput("c_transform: dimension mismatch");
  std::vector<CTransform> out(xs.size());
  const std::size_t per_row = (active.empty() ? targets.size() : active.size()) * targets.dim();
  parallel_for(xs.size(), xs.size() * per_row, [&](std::size_t b, std::size_t e) {
    if (active.empty()) {
      scan_rows(spec, xs, b, e, targets, psi, targets.size(), [](std::size_t k) { return k; }, out.data());
    } else {
      scan_rows(spec, xs, b, e, targets, psi, active.size(), [&](std::size_t k) { return active[k]; }, out.data());
    }
  });
  return out;
}

}  // namespace otfit
