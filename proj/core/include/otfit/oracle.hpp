#pragma once

#include <cstddef>
#include <vector>

#include "otfit/costs.hpp"
#include "otfit/dataset.hpp"

namespace otfit {

/// Finite probability measure.
struct DiscreteMeasure {
  PointSet points;
  std::vector<double> weights;

  static DiscreteMeasure uniform(PointSet points);
  /// Throws InvalidInput when lengths differ, a weight is negative or
  /// non-finite, or the weights do not sum to 1 within 1e-12.
  void validate() const;
  std::size_t size() const noexcept { return weights.size(); }
};

/// Row-major n x m coupling.
struct Coupling {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> mass;

  double operator()(std::size_t i, std::size_t j) const { return mass[i * cols + j]; }
};

struct OtSolution {
  double cost = 0.0;
  Coupling plan;
};

enum class OtMethod { Auto, Enumeration, Flow };

inline constexpr std::size_t kOracleMaxSupport = 512;
inline constexpr std::size_t kEnumerationMaxSupport = 8;

/// Exact discrete optimal transport cost and an optimal coupling.
/// Auto picks assignment enumeration for equal-size uniform supports of at
/// most 8 points and the successive-shortest-path transportation solver
/// otherwise. Throws InvalidInput when a side exceeds `max_support`, when
/// total masses differ by more than 1e-9, or when Enumeration is forced on
/// an unsupported instance.
OtSolution exact_ot_cost(const CostSpec& spec, const DiscreteMeasure& a, const DiscreteMeasure& b,
                         OtMethod method = OtMethod::Auto, std::size_t max_support = kOracleMaxSupport);

/// Same solver on a precomputed n x m cost matrix (row-major).
OtSolution solve_transport(const std::vector<double>& cost, std::size_t n, std::size_t m,
                           const std::vector<double>& supply, const std::vector<double>& demand);

struct SemiDiscrete1d {
  double cost = 0.0;      ///< optimal transport cost
  double boundary = 0.0;  ///< split point between the two cells
  double psi_gap = 0.0;   ///< psi_first - psi_second at the optimum
};

/// Closed-form semi-discrete optimum between uniform[source_low,
/// source_high] and the two-point uniform measure {first, second},
/// first < second, under |x - y|^p (L1 and L2 coincide in 1D). In 1D the
/// monotone rearrangement is optimal, so each target receives half the
/// source mass and the boundary is the source median.
SemiDiscrete1d analytic_1d_semidiscrete(const CostSpec& spec, double first, double second,
                                        double source_low = 0.0, double source_high = 1.0);

}  // namespace otfit
