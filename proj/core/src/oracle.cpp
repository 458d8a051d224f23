#include "otfit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otfit/error.hpp"

namespace otfit {

DiscreteMeasure DiscreteMeasure::uniform(PointSet points) {
  DiscreteMeasure m;
  const std::size_t n = points.size();
  m.points = std::move(points);
  m.weights.assign(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  return m;
}

void DiscreteMeasure::validate() const {
  if (weights.empty()) throw InvalidInput("DiscreteMeasure: empty support");
  if (points.size() != weights.size()) throw InvalidInput("DiscreteMeasure: points/weights length mismatch");
  double s = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidInput("DiscreteMeasure: weights must be finite and >= 0");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-12) throw InvalidInput("DiscreteMeasure: weights must sum to 1");
}

namespace {

bool uniform_weights(const DiscreteMeasure& m) {
  const double u = 1.0 / static_cast<double>(m.size());
  return std::all_of(m.weights.begin(), m.weights.end(), [u](double w) { return std::abs(w - u) <= 1e-15; });
}

OtSolution enumerate_assignments(const std::vector<double>& cost, std::size_t n) {
  std::vector<std::size_t> perm(n), best;
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  OtSolution s;
  const double w = 1.0 / static_cast<double>(n);
  s.cost = best_cost * w;
  s.plan = Coupling{n, n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) s.plan.mass[i * n + best[i]] = w;
  return s;
}

}  // namespace

OtSolution solve_transport(const std::vector<double>& cost, std::size_t n, std::size_t m,
                           const std::vector<double>& supply, const std::vector<double>& demand) {
  if (n == 0 || m == 0) throw InvalidInput("solve_transport: empty side");
  if (cost.size() != n * m || supply.size() != n || demand.size() != m) {
    throw InvalidInput("solve_transport: size mismatch");
  }
  // Successive shortest augmenting paths on the bipartite residual graph
  // with Johnson potentials. Forward edges i->j are uncapacitated; reverse
  // edges j->i carry the current flow.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr double kMassEps = 1e-14;
  const std::size_t v_count = n + m;

  std::vector<double> flow(n * m, 0.0);
  std::vector<double> rem_supply = supply, rem_demand = demand;
  std::vector<double> pot(v_count, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double mn = kInf;
    for (std::size_t i = 0; i < n; ++i) mn = std::min(mn, cost[i * m + j]);
    pot[n + j] = mn;
  }

  std::vector<double> dist(v_count);
  std::vector<std::ptrdiff_t> pred(v_count);
  std::vector<char> done(v_count);

  auto supply_left = [&] {
    for (double s : rem_supply) {
      if (s > kMassEps) return true;
    }
    return false;
  };

  std::size_t guard = 0;
  const std::size_t guard_max = 64 * (v_count + 16) * (v_count + 16);
  while (supply_left()) {
    if (++guard > guard_max) throw SolverAbort("solve_transport: augmentation limit exceeded", static_cast<std::int64_t>(guard));
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(pred.begin(), pred.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (rem_supply[i] > kMassEps) dist[i] = 0.0;
    }
    std::ptrdiff_t target = -1;
    for (;;) {
      std::ptrdiff_t v = -1;
      double best = kInf;
      for (std::size_t u = 0; u < v_count; ++u) {
        if (!done[u] && dist[u] < best) {
          best = dist[u];
          v = static_cast<std::ptrdiff_t>(u);
        }
      }
      if (v < 0) break;
      const auto uv = static_cast<std::size_t>(v);
      done[uv] = 1;
      if (uv >= n) {
        const std::size_t j = uv - n;
        if (rem_demand[j] > kMassEps) {
          target = v;
          break;
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (done[i] || flow[i * m + j] <= 0.0) continue;
          const double rc = std::max(0.0, -cost[i * m + j] + pot[uv] - pot[i]);
          if (best + rc < dist[i]) {
            dist[i] = best + rc;
            pred[i] = v;
          }
        }
      } else {
        const std::size_t i = uv;
        for (std::size_t j = 0; j < m; ++j) {
          if (done[n + j]) continue;
          const double rc = std::max(0.0, cost[i * m + j] + pot[i] - pot[n + j]);
          if (best + rc < dist[n + j]) {
            dist[n + j] = best + rc;
            pred[n + j] = v;
          }
        }
      }
    }
    if (target < 0) throw SolverAbort("solve_transport: no augmenting path (unbalanced masses)", 0);
    const double dt = dist[static_cast<std::size_t>(target)];
    for (std::size_t u = 0; u < v_count; ++u) pot[u] += std::min(dist[u], dt);

    // Bottleneck along the path.
    const std::size_t t = static_cast<std::size_t>(target) - n;
    double delta = rem_demand[t];
    std::size_t v = static_cast<std::size_t>(target);
    while (pred[v] >= 0) {
      const auto u = static_cast<std::size_t>(pred[v]);
      if (u >= n) delta = std::min(delta, flow[v * m + (u - n)]);  // reverse edge sink u -> source v
      v = u;
    }
    const std::size_t root = v;
    delta = std::min(delta, rem_supply[root]);

    v = static_cast<std::size_t>(target);
    while (pred[v] >= 0) {
      const auto u = static_cast<std::size_t>(pred[v]);
      if (u < n) {
        flow[u * m + (v - n)] += delta;
      } else {
        double& f = flow[v * m + (u - n)];
        f = f - delta <= kMassEps * 1e-2 ? 0.0 : f - delta;
      }
      v = u;
    }
    rem_supply[root] = rem_supply[root] - delta <= kMassEps * 1e-2 ? 0.0 : rem_supply[root] - delta;
    rem_demand[t] = rem_demand[t] - delta <= kMassEps * 1e-2 ? 0.0 : rem_demand[t] - delta;
  }

  OtSolution s;
  s.plan = Coupling{n, m, std::move(flow)};
  for (std::size_t k = 0; k < n * m; ++k) s.cost += s.plan.mass[k] * cost[k];
  return s;
}

OtSolution exact_ot_cost(const CostSpec& spec, const DiscreteMeasure& a, const DiscreteMeasure& b, OtMethod method,
                         std::size_t max_support) {
  if (a.size() > max_support || b.size() > max_support) {
    throw InvalidInput("exact_ot_cost: support size " + std::to_string(std::max(a.size(), b.size())) +
                       " exceeds the oracle limit of " + std::to_string(max_support) +
                       "; lower the sample count M or the dataset size N");
  }
  if (a.weights.empty() || b.weights.empty()) throw InvalidInput("exact_ot_cost: empty measure");
  if (a.points.size() != a.weights.size() || b.points.size() != b.weights.size()) {
    throw InvalidInput("exact_ot_cost: points/weights length mismatch");
  }
  if (a.points.dim() != b.points.dim()) throw InvalidInput("exact_ot_cost: dimension mismatch");
  for (const auto* m : {&a, &b}) {
    for (double w : m->weights) {
      if (!std::isfinite(w) || w < 0.0) throw InvalidInput("exact_ot_cost: weights must be finite and >= 0");
    }
  }
  const double sa = std::accumulate(a.weights.begin(), a.weights.end(), 0.0);
  const double sb = std::accumulate(b.weights.begin(), b.weights.end(), 0.0);
  if (std::abs(sa - sb) > 1e-9) throw InvalidInput("exact_ot_cost: unbalanced total masses");

  const std::size_t n = a.size(), m = b.size();
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = otfit::cost(spec, a.points[i], b.points[j]);
  }

  const bool enumerable = n == m && n <= kEnumerationMaxSupport && uniform_weights(a) && uniform_weights(b);
  if (method == OtMethod::Enumeration && !enumerable) {
    throw InvalidInput("exact_ot_cost: enumeration needs equal-size uniform supports of at most 8 points");
  }
  if (method == OtMethod::Enumeration || (method == OtMethod::Auto && enumerable)) {
    return enumerate_assignments(cost, n);
  }
  // Rescale b onto a's total so the flow balances exactly.
  std::vector<double> demand = b.weights;
  if (sb > 0.0) {
    for (double& d : demand) d *= sa / sb;
  }
  return solve_transport(cost, n, m, a.weights, demand);
}

SemiDiscrete1d analytic_1d_semidiscrete(const CostSpec& spec, double first, double second, double source_low,
                                        double source_high) {
  if (!std::isfinite(first) || !std::isfinite(second) || !(first < second)) {
    throw InvalidInput("analytic_1d_semidiscrete: need finite targets with first < second");
  }
  if (!std::isfinite(source_low) || !std::isfinite(source_high) || !(source_low < source_high)) {
    throw InvalidInput("analytic_1d_semidiscrete: need a non-empty finite source interval");
  }
  const double p = spec.exponent();
  // Antiderivative of |x - t|^p.
  auto prim = [p](double x, double t) {
    const double d = x - t;
    const double mag = std::pow(std::abs(d), p + 1.0) / (p + 1.0);
    return d >= 0.0 ? mag : -mag;
  };
  const double mid = 0.5 * (source_low + source_high);
  const double integral = (prim(mid, first) - prim(source_low, first)) + (prim(source_high, second) - prim(mid, second));
  SemiDiscrete1d out;
  out.cost = integral / (source_high - source_low);
  out.boundary = mid;
  out.psi_gap = std::pow(std::abs(mid - first), p) - std::pow(std::abs(mid - second), p);
  return out;
}

}  // namespace otfit
