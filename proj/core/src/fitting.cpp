#include "otfit/fitting.hpp"

#include <algorithm>
#include <cmath>

#include "otfit/error.hpp"

namespace otfit {

std::string to_string(FitOptimizer o) { return o == FitOptimizer::Sgd ? "sgd" : "adam"; }

FitOptimizer parse_fit_optimizer(const std::string& text) {
  if (text == "sgd") return FitOptimizer::Sgd;
  if (text == "adam") return FitOptimizer::Adam;
  throw InvalidInput("unknown optimizer '" + text + "' (expected sgd or adam)");
}

std::string to_string(FitStop s) {
  switch (s) {
    case FitStop::TargetReached: return "target_reached";
    case FitStop::MaxSteps: return "max_steps";
    case FitStop::Plateau: return "plateau";
  }
  return "?";
}

void FitConfig::validate() const {
  if (batch_size < 1) throw InvalidInput("fit batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("fit learning_rate must be > 0");
  if (max_steps < 0) throw InvalidInput("fit max_steps must be >= 0");
  if (!(target_loss_fraction > 0.0 && target_loss_fraction < 1.0)) {
    throw InvalidInput("fit target_loss_fraction must be in (0, 1)");
  }
  if (check_every < 1) throw InvalidInput("fit check_every must be >= 1");
  if (eval_pairs < 1) throw InvalidInput("fit eval_pairs must be >= 1");
  if (!(plateau_tolerance >= 0.0)) throw InvalidInput("fit plateau_tolerance must be >= 0");
  if (plateau_patience < 1) throw InvalidInput("fit plateau_patience must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("fit momentum must be in [0, 1)");
}

namespace {

double column_cost(const CostSpec& spec, const Eigen::MatrixXf& out, Eigen::Index j, PointView target, Point& buf) {
  for (Eigen::Index k = 0; k < out.rows(); ++k) buf[static_cast<std::size_t>(k)] = out(k, j);
  return cost_unchecked(spec, buf, target);
}

/// Targets for already generated points under the frozen map.
PointSet map_targets(const MongeMap& map, const PointSet& generated, Rng& rng) {
  PointSet out(0, map.targets().dim());
  out.reserve(generated.size());
  if (map.perturbation_sigma() > 0.0) {
    for (std::size_t j = 0; j < generated.size(); ++j) out.push_back(apply_map(map, generated.row(j), &rng).target);
  } else {
    for (std::size_t i : apply_map_batch(map, generated)) out.push_back(map.targets()[i]);
  }
  return out;
}

}  // namespace

double fit_loss(const CostSpec& spec, const Generator& g, const FitPairs& pairs) {
  if (pairs.size() == 0) throw InvalidInput("fit_loss: no pairs");
  if (static_cast<std::size_t>(pairs.latents.cols()) != pairs.size()) {
    throw InvalidInput("fit_loss: latent/target count mismatch");
  }
  if (static_cast<std::size_t>(g.output_dim()) != pairs.targets.dim()) {
    throw InvalidInput("fit_loss: generator output dimension != target dimension");
  }
  const Eigen::MatrixXf out = g.forward(pairs.latents);
  Point buf(pairs.targets.dim());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    sum += column_cost(spec, out, j, pairs.targets.row(static_cast<std::size_t>(j)), buf);
  }
  return sum / static_cast<double>(pairs.size());
}

FitPairs draw_fit_pairs(const PushforwardSampler& sampler, const MongeMap& map, std::size_t n, Rng& rng) {
  auto b = sampler.sample(rng, n);
  FitPairs p;
  p.targets = map_targets(map, b.outputs, rng);
  p.latents = std::move(b.latents);
  return p;
}

FitResult fit_solve(const CostSpec& spec, const PushforwardSampler& sampler, const Generator& g_old,
                    const MongeMap& map, const FitConfig& config, Rng& rng) {
  config.validate();
  if (sampler.generator() == nullptr) throw InvalidInput("fit_solve: sampler has no generator");
  if (sampler.generator()->version() != g_old.version() || map.generator_version() != g_old.version()) {
    throw InvalidInput("fit_solve: stale map (solved against generator version " +
                       std::to_string(map.generator_version()) + ", current " + std::to_string(g_old.version()) + ")");
  }
  if (static_cast<std::size_t>(g_old.output_dim()) != map.targets().dim()) {
    throw InvalidInput("fit_solve: generator output dimension != dataset dimension");
  }

  FitResult result{g_old, {}};
  Generator& g = result.generator;
  FitReport& report = result.report;

  Rng eval_rng(rng());
  const FitPairs eval = draw_fit_pairs(sampler, map, config.eval_pairs, eval_rng);
  report.initial_loss = report.final_loss = fit_loss(spec, g, eval);
  report.initial_loss_beta = report.final_loss_beta = std::pow(report.initial_loss, spec.beta());
  report.loss_trace.push_back(report.initial_loss);
  if (report.initial_loss == 0.0) {
    report.stop_reason = FitStop::TargetReached;
    return result;
  }
  const double goal = config.target_loss_fraction * report.initial_loss_beta;

  // Memo targets are recomputed under the final frozen psi.
  FitPairs memo;
  if (config.reuse_memoized && map.memo().size() > 0) {
    memo.latents = map.memo().latents;
    memo.targets = map_targets(map, map.memo().generated, rng);
  }
  std::size_t memo_cursor = 0;

  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  const auto dim = static_cast<Eigen::Index>(map.targets().dim());
  const auto dz = static_cast<Eigen::Index>(g_old.input_dim());
  Eigen::MatrixXf z(dz, batch), upstream(dim, batch);
  PointSet targets(static_cast<std::size_t>(batch), static_cast<std::size_t>(dim));
  Point out_buf(static_cast<std::size_t>(dim)), grad(static_cast<std::size_t>(dim));
  GradientBuffer grads(g);
  ForwardTape tape;
  MomentumState momentum{config.momentum, {}};
  AdamState adam;

  std::int64_t over_run = 0;
  int plateau_run = 0;
  double last_check = report.initial_loss;
  report.stop_reason = FitStop::MaxSteps;

  std::int64_t step = 0;
  while (step < config.max_steps) {
    // Assemble the batch: memo first, then fresh pairs.
    Eigen::Index filled = 0;
    while (filled < batch && memo_cursor < memo.size()) {
      z.col(filled) = memo.latents.col(static_cast<Eigen::Index>(memo_cursor));
      auto src = memo.targets.row(memo_cursor);
      std::copy(src.begin(), src.end(), targets.row(static_cast<std::size_t>(filled)).begin());
      ++memo_cursor;
      ++report.memo_pairs_used;
      ++filled;
    }
    if (filled < batch) {
      const auto fresh = draw_fit_pairs(sampler, map, static_cast<std::size_t>(batch - filled), rng);
      for (Eigen::Index j = 0; j < fresh.latents.cols(); ++j, ++filled) {
        z.col(filled) = fresh.latents.col(j);
        auto src = fresh.targets.row(static_cast<std::size_t>(j));
        std::copy(src.begin(), src.end(), targets.row(static_cast<std::size_t>(filled)).begin());
      }
    }

    const Eigen::MatrixXf out = g.forward(z, tape);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      const auto target = targets.row(static_cast<std::size_t>(j));
      loss += column_cost(spec, out, j, target, out_buf);
      cost_gradient_x(spec, out_buf, target, grad);
      for (Eigen::Index k = 0; k < dim; ++k) upstream(k, j) = static_cast<float>(grad[static_cast<std::size_t>(k)]);
    }
    loss /= static_cast<double>(batch);
    if (!std::isfinite(loss)) throw SolverAbort("fit_solve: non-finite regression loss", step);
    over_run = loss > 10.0 * report.initial_loss ? over_run + 1 : 0;
    if (over_run >= 100) {
      throw SolverAbort("fit_solve: diverged (batch loss " + std::to_string(loss) + " > 10x initial " +
                            std::to_string(report.initial_loss) + " for 100 steps); lower fit.learning_rate",
                        step);
    }

    grads.clear();
    g.backward(tape, upstream, grads);
    if (config.optimizer == FitOptimizer::Adam) {
      adam_update(g, grads, config.learning_rate, adam, step);
    } else {
      sgd_update(g, grads, config.learning_rate, &momentum, step);
    }
    ++step;

    if (step % config.check_every == 0 || step == config.max_steps) {
      const double l = fit_loss(spec, g, eval);
      report.loss_trace.push_back(l);
      report.final_loss = l;
      report.final_loss_beta = std::pow(l, spec.beta());
      if (report.final_loss_beta <= goal) {
        report.stop_reason = FitStop::TargetReached;
        break;
      }
      if (config.plateau_tolerance > 0.0) {
        const double gain = (last_check - l) / std::max(last_check, 1e-300);
        plateau_run = gain < config.plateau_tolerance ? plateau_run + 1 : 0;
        if (plateau_run >= config.plateau_patience) {
          report.stop_reason = FitStop::Plateau;
          break;
        }
      }
      last_check = l;
    }
  }
  report.steps = step;
  return result;
}

}  // namespace otfit
