#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "otfit/dataset.hpp"

namespace otfit {

enum class Metric { L1, L2 };

std::string to_string(Metric m);
/// Accepts "l1"/"L1"/"l2"/"L2"; throws InvalidInput otherwise.
Metric parse_metric(const std::string& text);

/// Ground cost c(x, y) = d(x, y)^p. For p = 1 the Monge map need not be
/// unique; the solvers still run and converge to a near-optimal plan.
class CostSpec {
 public:
  CostSpec() = default;
  /// Throws InvalidInput unless p >= 1 and finite.
  CostSpec(Metric metric, double exponent);

  Metric metric() const noexcept { return metric_; }
  double exponent() const noexcept { return exponent_; }
  double beta() const noexcept { return 1.0 / exponent_; }

  /// True when c is differentiable away from x = y only (p = 1).
  bool kinked_at_zero() const noexcept { return exponent_ == 1.0; }

  friend bool operator==(const CostSpec&, const CostSpec&) = default;

 private:
  Metric metric_ = Metric::L1;
  double exponent_ = 1.0;
};

/// d(x, y)^p. Throws InvalidInput on dimension mismatch or non-finite input.
double cost(const CostSpec& spec, PointView x, PointView y);

/// Same as cost() without validation; used by the inner scans.
double cost_unchecked(const CostSpec& spec, PointView x, PointView y) noexcept;

/// Subgradient of cost w.r.t. x. Coordinates where the cost is not
/// differentiable (x_k = y_k under L1, x = y under L2 with p = 1) get 0.
Point cost_gradient_x(const CostSpec& spec, PointView x, PointView y);
void cost_gradient_x(const CostSpec& spec, PointView x, PointView y, std::span<double> out);

struct CTransform {
  double value = 0.0;           ///< min_i c(x, y_i) - psi_i
  std::size_t index = 0;        ///< smallest index attaining the min
  double runner_up = 0.0;       ///< second smallest value (== value if N == 1)
};

/// c-transform of psi at x over the whole dataset.
CTransform c_transform(const CostSpec& spec, PointView x, const Dataset& targets,
                       std::span<const double> psi);

/// c-transform restricted to `active` indices (sorted ascending). Ties go to
/// the smallest index. No validation.
CTransform c_transform_over(const CostSpec& spec, PointView x, const Dataset& targets,
                            std::span<const double> psi,
                            std::span<const std::size_t> active) noexcept;

/// c-transform for every row of `xs`, parallelised over rows. Results are
/// independent of the thread count.
std::vector<CTransform> c_transform_batch(const CostSpec& spec, const PointSet& xs,
                                          const Dataset& targets, std::span<const double> psi,
                                          std::span<const std::size_t> active = {});

}  // namespace otfit
