#include "otfit/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otfit/error.hpp"

namespace otfit {

Potential Potential::zeros(std::size_t n, double learning_rate, int batch_size) {
  Potential p;
  p.values.assign(n, 0.0);
  p.learning_rate = learning_rate;
  p.batch_size = batch_size;
  return p;
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::HistogramUniform: return "histogram_uniform";
    case StopReason::MaxSteps: return "max_steps";
    case StopReason::ObjectivePlateau: return "objective_plateau";
  }
  return "?";
}

std::string to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "halve_on_stall"; }

LrSchedule parse_lr_schedule(const std::string& text) {
  if (text == "constant") return LrSchedule::Constant;
  if (text == "halve_on_stall") return LrSchedule::HalveOnStall;
  throw InvalidInput("unknown lr schedule '" + text + "' (expected constant or halve_on_stall)");
}

void OtsConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("ots learning_rate must be > 0");
  }
  if (batch_size < 1) throw InvalidInput("ots batch_size must be >= 1");
  if (max_steps < 0) throw InvalidInput("ots max_steps must be >= 0");
  if (window_batches < 1) throw InvalidInput("ots window_batches must be >= 1");
  if (!(window_samples_per_target >= 0.0)) throw InvalidInput("ots window_samples_per_target must be >= 0");
  if (!(histogram_tolerance > 0.0 && histogram_tolerance < 1.0)) {
    throw InvalidInput("ots histogram_tolerance must be in (0, 1)");
  }
  if (!(plateau_tolerance >= 0.0)) throw InvalidInput("ots plateau_tolerance must be >= 0");
  if (plateau_patience < 1) throw InvalidInput("ots plateau_patience must be >= 1");
  if (!(subsample_start > 0.0 && subsample_start <= 1.0)) {
    throw InvalidInput("ots subsample_start must be in (0, 1]");
  }
  if (subsample_horizon < 0) throw InvalidInput("ots subsample_horizon must be >= 0");
  if (subsample_stages < 1) throw InvalidInput("ots subsample_stages must be >= 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw InvalidInput("ots lr_decay_factor must be in (0, 1]");
  }
  if (!(lr_min >= 0.0)) throw InvalidInput("ots lr_min must be >= 0");
}

std::size_t OtsConfig::window_size(std::size_t n_targets) const {
  const double by_targets = std::ceil(window_samples_per_target * static_cast<double>(n_targets) /
                                      static_cast<double>(batch_size));
  return std::max(static_cast<std::size_t>(window_batches), static_cast<std::size_t>(by_targets));
}

BatchLoss ots_batch_loss(const CostSpec& spec, const PointSet& batch, const Dataset& targets,
                         std::span<const double> psi, std::span<const std::size_t> active) {
  if (batch.size() == 0) throw InvalidInput("ots_batch_loss: empty batch");
  if (psi.size() != targets.size()) throw InvalidInput("ots_batch_loss: psi length != dataset size");
  if (batch.dim() != targets.dim()) throw InvalidInput("ots_batch_loss: dimension mismatch");
  for (std::size_t i : active) {
    if (i >= targets.size()) throw InvalidInput("ots_batch_loss: active index out of range");
  }
  const auto res = c_transform_batch(spec, batch, targets, psi, active);
  const std::size_t n_active = active.empty() ? targets.size() : active.size();
  const double inv_active = 1.0 / static_cast<double>(n_active);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  BatchLoss out;
  out.grad.assign(targets.size(), 0.0);
  double psi_mean = 0.0;
  if (active.empty()) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      psi_mean += psi[i];
      out.grad[i] = inv_active;
    }
  } else {
    for (std::size_t i : active) {
      psi_mean += psi[i];
      out.grad[i] = inv_active;
    }
  }
  psi_mean *= inv_active;
  double sum = 0.0;
  out.assignment.reserve(res.size());
  for (const auto& r : res) {
    sum += r.value;
    out.grad[r.index] -= inv_b;
    out.assignment.push_back(r.index);
  }
  out.loss = sum * inv_b + psi_mean;
  return out;
}

double histogram_tv(std::span<const std::uint64_t> hist) {
  if (hist.empty()) throw InvalidInput("histogram_tv: empty histogram");
  const std::uint64_t total = std::accumulate(hist.begin(), hist.end(), std::uint64_t{0});
  if (total == 0) throw InvalidInput("histogram_tv: all-zero histogram");
  const double u = 1.0 / static_cast<double>(hist.size());
  const double inv_total = 1.0 / static_cast<double>(total);
  double tv = 0.0;
  for (auto c : hist) tv += std::abs(static_cast<double>(c) * inv_total - u);
  return 0.5 * tv;
}

bool histogram_stop_check(std::span<const std::uint64_t> hist, double tolerance) {
  if (!(tolerance > 0.0 && tolerance < 1.0)) throw InvalidInput("histogram_stop_check: tolerance must be in (0, 1)");
  // Small slack so an exact boundary case (e.g. TV = 0.05 at tol 0.05) is
  // not lost to rounding.
  return histogram_tv(hist) <= tolerance + 1e-12;
}

SubsampleSchedule::SubsampleSchedule(const OtsConfig& config, std::size_t n_targets, std::uint64_t seed)
    : start_(config.subsample_start),
      horizon_(config.subsample_horizon),
      stages_(config.subsample_stages),
      n_(n_targets),
      seed_(seed) {}

bool SubsampleSchedule::full(std::int64_t step) const {
  return start_ >= 1.0 || step >= horizon_ || stage_size(stage_of(step)) >= n_;
}

std::size_t SubsampleSchedule::stage_of(std::int64_t step) const {
  if (horizon_ <= 0) return static_cast<std::size_t>(stages_);
  const auto s = (static_cast<long double>(step) * stages_) / static_cast<long double>(horizon_);
  return std::min(static_cast<std::size_t>(s), static_cast<std::size_t>(stages_));
}

std::size_t SubsampleSchedule::stage_size(std::size_t stage) const {
  if (stage >= static_cast<std::size_t>(stages_)) return n_;
  // Geometric growth f0^(1 - k/S).
  const double f = std::pow(start_, 1.0 - static_cast<double>(stage) / stages_);
  const auto size = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n_) - 1e-9));
  return std::clamp<std::size_t>(size, 1, n_);
}

double SubsampleSchedule::fraction(std::int64_t step) const {
  if (full(step)) return 1.0;
  return static_cast<double>(stage_size(stage_of(step))) / static_cast<double>(n_);
}

std::span<const std::size_t> SubsampleSchedule::active(std::int64_t step) {
  if (full(step)) return {};
  const std::size_t stage = stage_of(step);
  if (stage != cached_stage_) {
    std::vector<std::size_t> idx(n_);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(seed_, {0x5ab5ULL, stage});
    // Partial Fisher-Yates; only the first `size` slots are needed.
    const std::size_t size = stage_size(stage);
    for (std::size_t i = 0; i < size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_ - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(size);
    std::sort(idx.begin(), idx.end());
    cached_ = std::move(idx);
    cached_stage_ = stage;
  }
  return cached_;
}

std::vector<std::size_t> subsample_schedule(std::int64_t step, const OtsConfig& config, std::size_t n_targets,
                                            std::uint64_t seed) {
  SubsampleSchedule sched(config, n_targets, seed);
  auto a = sched.active(step);
  if (a.empty()) {
    std::vector<std::size_t> all(n_targets);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  return {a.begin(), a.end()};
}

namespace {

/// Statistics of one measurement window.
struct Window {
  std::size_t batches = 0;
  double loss_sum = 0.0;
  double loss_sq = 0.0;
  std::vector<std::uint64_t> hist;
  std::vector<double> psi_sum;
  std::vector<Eigen::MatrixXf> latents;
  std::vector<PointSet> generated;
  std::vector<std::size_t> targets;

  void reset(std::size_t n, bool averaging) {
    batches = 0;
    loss_sum = loss_sq = 0.0;
    hist.assign(n, 0);
    if (averaging) psi_sum.assign(n, 0.0);
    latents.clear();
    generated.clear();
    targets.clear();
  }

  double mean() const { return loss_sum / static_cast<double>(batches); }
  double std_error() const {
    if (batches < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, loss_sq / static_cast<double>(batches) - m * m);
    return std::sqrt(var / static_cast<double>(batches - 1));
  }
};

OtsMemo flatten_memo(const Window& w) {
  OtsMemo memo;
  memo.targets = w.targets;
  if (w.latents.empty()) return memo;
  Eigen::Index cols = 0;
  for (const auto& m : w.latents) cols += m.cols();
  memo.latents.resize(w.latents.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& m : w.latents) {
    memo.latents.middleCols(at, m.cols()) = m;
    at += m.cols();
  }
  memo.generated = PointSet(0, w.generated.front().dim());
  memo.generated.reserve(memo.targets.size());
  for (const auto& g : w.generated) {
    memo.generated.data().insert(memo.generated.data().end(), g.data().begin(), g.data().end());
  }
  return memo;
}

}  // namespace

OtsResult ots_solve(const CostSpec& spec, const PushforwardSampler& sampler, const Dataset& targets,
                    const OtsConfig& config, Rng& rng, std::span<const double> initial_psi) {
  config.validate();
  const std::size_t n = targets.size();
  if (n == 0) throw InvalidInput("ots_solve: empty dataset");
  if (sampler.output_dim() != targets.dim()) throw InvalidInput("ots_solve: sampler/dataset dimension mismatch");
  if (!initial_psi.empty() && initial_psi.size() != n) throw InvalidInput("ots_solve: initial psi length mismatch");

  OtsResult result;
  result.potential = Potential::zeros(n, config.learning_rate, config.batch_size);
  auto& psi = result.potential.values;
  if (!initial_psi.empty()) std::copy(initial_psi.begin(), initial_psi.end(), psi.begin());

  auto& report = result.report;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t window_len = config.window_size(n);
  const double inv_b = 1.0 / static_cast<double>(batch);
  SubsampleSchedule schedule(config, n, rng());

  double eta = config.learning_rate;
  double best_tv = INFINITY;
  double prev_objective = NAN;
  int plateau_run = 0;

  Window cur, done;
  bool have_done = false;
  const bool snapshot = config.snapshot_check;
  std::vector<double> snap, measured;
  bool have_snap = false;
  bool cur_full = schedule.full(0);
  cur.reset(n, config.averaging);

  std::int64_t step = 0;
  report.stop_reason = StopReason::MaxSteps;
  for (; step < config.max_steps; ++step) {
    const auto active = schedule.active(step);
    const bool full = active.empty();
    if (full != cur_full) {
      cur.reset(n, config.averaging);
      cur_full = full;
    }
    const std::size_t n_active = full ? n : active.size();

    auto b = sampler.sample(rng, batch);
    const auto ct = c_transform_batch(spec, b.outputs, targets, psi, active);
    const bool use_snap = snapshot && full && have_snap;
    std::vector<CTransform> ct_snap;
    if (use_snap) ct_snap = c_transform_batch(spec, b.outputs, targets, snap);
    const auto& assigned = use_snap ? ct_snap : ct;

    double psi_mean = 0.0;
    if (full) {
      for (double v : psi) psi_mean += v;
    } else {
      for (std::size_t i : active) psi_mean += psi[i];
    }
    psi_mean /= static_cast<double>(n_active);
    double value_sum = 0.0;
    for (const auto& r : ct) value_sum += r.value;
    const double loss = value_sum * inv_b + psi_mean;
    if (!std::isfinite(loss)) throw SolverAbort("ots_solve: non-finite dual loss", step);

    // psi <- psi + eta * grad
    const double up = eta / static_cast<double>(n_active);
    if (full) {
      for (double& v : psi) v += up;
    } else {
      for (std::size_t i : active) psi[i] += up;
    }
    const double down = eta * inv_b;
    for (const auto& r : ct) psi[r.index] -= down;

    report.batch_loss_trace.push_back(loss);
    report.subsample_fraction_trace.push_back(static_cast<double>(n_active) / static_cast<double>(n));

    ++cur.batches;
    cur.loss_sum += loss;
    cur.loss_sq += loss * loss;
    for (const auto& r : assigned) ++cur.hist[r.index];
    if (config.averaging) {
      for (std::size_t i = 0; i < n; ++i) cur.psi_sum[i] += psi[i];
    }
    if (config.memorize && cur.targets.size() < config.memo_capacity) {
      cur.latents.push_back(std::move(b.latents));
      cur.generated.push_back(std::move(b.outputs));
      for (const auto& r : assigned) cur.targets.push_back(r.index);
    }

    if (cur.batches < window_len) continue;

    // Window complete.
    const double objective = cur.mean();
    bool stop = false;
    if (full) {
      const bool measurable = !snapshot || have_snap;
      const double tv = measurable ? histogram_tv(cur.hist) : INFINITY;
      if (measurable) report.histogram_tv_trace.push_back(tv);
      if (tv <= config.histogram_tolerance) {
        report.stop_reason = StopReason::HistogramUniform;
        stop = true;
      }
      if (!stop && config.plateau_tolerance > 0.0 && std::isfinite(prev_objective)) {
        const double rel = std::abs(objective - prev_objective) / std::max(std::abs(objective), 1e-300);
        plateau_run = rel < config.plateau_tolerance ? plateau_run + 1 : 0;
        if (plateau_run >= config.plateau_patience) {
          report.stop_reason = StopReason::ObjectivePlateau;
          stop = true;
        }
      }
      if (!stop && measurable && config.lr_schedule == LrSchedule::HalveOnStall) {
        if (!(tv < best_tv * (1.0 - config.lr_min_improvement))) {
          eta = std::max(eta * config.lr_decay_factor, config.lr_min);
        }
      }
      best_tv = std::min(best_tv, tv);
      prev_objective = objective;
      if (snapshot) {
        measured = have_snap ? snap : psi;
        if (config.averaging) {
          snap.resize(n);
          for (std::size_t i = 0; i < n; ++i) snap[i] = cur.psi_sum[i] / static_cast<double>(cur.batches);
        } else {
          snap = psi;
        }
        have_snap = true;
      }
    }
    std::swap(done, cur);
    have_done = true;
    if (stop) {
      ++step;
      break;
    }
    cur.reset(n, config.averaging);
  }

  const Window& final_window = have_done ? done : cur;
  report.steps = step;
  report.final_learning_rate = eta;
  if (final_window.batches > 0) {
    report.dual_objective_estimate = final_window.mean();
    report.dual_objective_stderr = final_window.std_error();
    report.assignment_histogram = final_window.hist;
    if (snapshot && report.stop_reason == StopReason::HistogramUniform) {
      psi = measured;
    } else if (snapshot && have_snap) {
      psi = snap;
    } else if (config.averaging) {
      for (std::size_t i = 0; i < n; ++i) {
        psi[i] = final_window.psi_sum[i] / static_cast<double>(final_window.batches);
      }
    }
  } else {
    report.assignment_histogram.assign(n, 0);
  }
  if (config.memorize) result.memo = flatten_memo(final_window);
  result.potential.steps_taken = step;
  result.potential.learning_rate = eta;
  return result;
}

double dual_objective(const CostSpec& spec, const PointSet& source, std::span<const double> weights,
                      const Dataset& targets, std::span<const double> psi) {
  if (source.size() == 0) throw InvalidInput("dual_objective: empty source");
  if (!weights.empty() && weights.size() != source.size()) throw InvalidInput("dual_objective: weight length mismatch");
  const auto ct = c_transform_batch(spec, source, targets, psi);
  double v = 0.0;
  if (weights.empty()) {
    for (const auto& r : ct) v += r.value;
    v /= static_cast<double>(source.size());
  } else {
    for (std::size_t m = 0; m < ct.size(); ++m) v += weights[m] * ct[m].value;
  }
  double psi_mean = 0.0;
  for (double p : psi) psi_mean += p;
  return v + psi_mean / static_cast<double>(psi.size());
}

Estimate dual_objective_estimate(const CostSpec& spec, const PushforwardSampler& sampler, const Dataset& targets,
                                 std::span<const double> psi, std::size_t n_samples, Rng& rng) {
  if (n_samples < 2) throw InvalidInput("dual_objective_estimate: need at least 2 samples");
  if (psi.size() != targets.size()) throw InvalidInput("dual_objective_estimate: psi length mismatch");
  double psi_mean = 0.0;
  for (double p : psi) psi_mean += p;
  psi_mean /= static_cast<double>(psi.size());
  constexpr std::size_t kChunk = 4096;
  double sum = 0.0, sq = 0.0;
  for (std::size_t done = 0; done < n_samples;) {
    const std::size_t m = std::min(kChunk, n_samples - done);
    const auto xs = sampler.sample_points(rng, m);
    for (const auto& r : c_transform_batch(spec, xs, targets, psi)) {
      const double v = r.value + psi_mean;
      sum += v;
      sq += v * v;
    }
    done += m;
  }
  const double nn = static_cast<double>(n_samples);
  Estimate e;
  e.mean = sum / nn;
  const double var = std::max(0.0, (sq - nn * e.mean * e.mean) / (nn - 1.0));
  e.std_error = std::sqrt(var / nn);
  return e;
}

}  // namespace otfit
