#include "otfit/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "otfit/binary_io.hpp"
#include "otfit/error.hpp"
#include "otfit/oracle.hpp"

namespace otfit {

namespace {

constexpr char kCheckpointMagic[4] = {'O', 'T', 'C', 'K'};

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

double opt_or_nan(const std::optional<double>& v) { return v ? *v : std::nan(""); }

std::optional<double> nan_to_opt(double v) {
  if (std::isnan(v)) return std::nullopt;
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidInput("train alpha must be in (0, 0.5)");
  if (outer_iterations < 0) throw InvalidInput("train outer_iterations must be >= 0");
  ots.validate();
  FitConfig f = fit;
  f.target_loss_fraction = fit_target_fraction();
  f.validate();
  latent.validate();
  if (eval_samples < 2) throw InvalidInput("train eval_samples must be >= 2");
  if (!(eval_plateau_tolerance >= 0.0)) throw InvalidInput("eval plateau_tolerance must be >= 0");
  if (eval_max_steps < 0) throw InvalidInput("eval max_steps must be >= 0");
  if (!(perturbation_sigma >= 0.0) || !std::isfinite(perturbation_sigma)) {
    throw InvalidInput("train perturbation_sigma must be >= 0");
  }
  if (!(cost_plateau_tolerance >= 0.0)) throw InvalidInput("train cost_plateau_tolerance must be >= 0");
  if (cost_plateau_window < 1) throw InvalidInput("train cost_plateau_window must be >= 1");
  if (checkpoint_every < 0) throw InvalidInput("train checkpoint_every must be >= 0");
}

std::uint64_t TrainConfig::hash() const {
  std::ostringstream s;
  s << "alpha=" << num(alpha) << ";seed=" << seed << ";sigma=" << num(perturbation_sigma);
  s << ";ots=" << num(ots.learning_rate) << ',' << ots.batch_size << ',' << ots.max_steps << ',' << ots.window_batches
    << ',' << num(ots.window_samples_per_target) << ',' << num(ots.histogram_tolerance) << ','
    << num(ots.plateau_tolerance) << ',' << ots.plateau_patience << ',' << num(ots.subsample_start) << ','
    << ots.subsample_horizon << ',' << ots.subsample_stages << ',' << to_string(ots.lr_schedule) << ','
    << num(ots.lr_decay_factor) << ',' << num(ots.lr_min) << ',' << num(ots.lr_min_improvement) << ','
    << ots.averaging << ',' << ots.memorize << ',' << ots.memo_capacity;
  s << ";fit=" << fit.batch_size << ',' << num(fit.learning_rate) << ',' << fit.max_steps << ','
    << fit.reuse_memoized << ',' << fit.check_every << ',' << fit.eval_pairs << ',' << num(fit.plateau_tolerance)
    << ',' << fit.plateau_patience << ',' << to_string(fit.optimizer) << ',' << num(fit.momentum);
  s << ";latent=" << to_string(latent.kind) << ',' << latent.dim << ',' << num(latent.low) << ',' << num(latent.high)
    << ',' << latent.support.size();
  for (double v : latent.support.data()) s << ',' << num(v);
  s << ";eval=" << eval_samples << ',' << evaluate_each_iteration << ',' << num(eval_plateau_tolerance) << ','
    << eval_max_steps << ',' << histogram_samples << ',' << estimate_eps_ot2 << ',' << warm_start_psi;
  s << ";plateau=" << num(cost_plateau_tolerance) << ',' << cost_plateau_window;
  const std::string text = s.str();
  return fnv1a64(text.data(), text.size());
}

double eps_ot2_from_histogram(const CostSpec& spec, const Dataset& dataset, std::span<const std::uint64_t> hist) {
  if (hist.size() != dataset.size()) throw InvalidInput("eps_ot2: histogram length != dataset size");
  if (dataset.size() == 1) return 0.0;
  std::uint64_t total = 0;
  for (auto c : hist) total += c;
  if (total == 0) throw InvalidInput("eps_ot2: empty histogram");
  if (dataset.size() > kOracleMaxSupport) {
    throw InvalidInput("eps_ot2: dataset size " + std::to_string(dataset.size()) + " exceeds the oracle limit of " +
                       std::to_string(kOracleMaxSupport) + "; lower N or disable the eps_ot2 estimate");
  }
  DiscreteMeasure mapped;
  mapped.points = PointSet(0, dataset.dim());
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (hist[i] == 0) continue;
    mapped.points.push_back(dataset[i]);
    mapped.weights.push_back(static_cast<double>(hist[i]) / static_cast<double>(total));
  }
  const auto target = DiscreteMeasure::uniform(dataset.points());
  const double c = exact_ot_cost(spec, mapped, target).cost;
  return std::pow(std::max(c, 0.0), spec.beta());
}

double estimate_eps_ot2(const MongeMap& map, const PushforwardSampler& sampler, const Dataset& dataset,
                        std::size_t m, Rng& rng) {
  if (&map.targets() != &dataset && map.targets().size() != dataset.size()) {
    throw InvalidInput("estimate_eps_ot2: map and dataset disagree");
  }
  if (dataset.size() > kOracleMaxSupport) {
    throw InvalidInput("estimate_eps_ot2: dataset size exceeds the oracle limit of " +
                       std::to_string(kOracleMaxSupport) + "; lower N");
  }
  const auto hist = assignment_histogram(map, sampler, m, rng);
  return eps_ot2_from_histogram(map.spec(), dataset, hist);
}

std::string metrics_header() {
  return "iter,cost_estimate,eps_ot2,eps_fit,contraction_ratio,wall_ms,cost_stderr,histogram_tv,ots_steps,fit_steps";
}

std::string metrics_row(const IterationDiagnostics& d) {
  std::string s = std::to_string(d.iter) + ',' + num(d.cost_estimate) + ',';
  if (d.eps_ot2) s += num(*d.eps_ot2);
  s += ',' + num(d.eps_fit) + ',';
  if (d.contraction_ratio) s += num(*d.contraction_ratio);
  s += ',' + num(d.wall_ms) + ',' + num(d.cost_stderr) + ',';
  if (d.histogram_tv) s += num(*d.histogram_tv);
  s += ',' + std::to_string(d.ots_steps) + ',' + std::to_string(d.fit_steps);
  return s;
}

void write_metrics(const std::filesystem::path& path, std::span<const IterationDiagnostics> rows) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + tmp + " for writing");
    os << metrics_header() << '\n';
    for (const auto& d : rows) os << metrics_row(d) << '\n';
    if (!os) throw FormatError(FormatErrorKind::Io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t next_iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt_%04llu.otck", static_cast<unsigned long long>(next_iteration));
  return dir / name;
}

void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + tmp + " for writing");
    io::write_bytes(os, std::string_view(kCheckpointMagic, 4));
    io::write_u32(os, kCheckpointFormatVersion);
    write_mlp(os, ck.generator);
    io::write_u32(os, static_cast<std::uint32_t>(ck.psi.size()));
    for (double v : ck.psi) io::write_f32(os, static_cast<float>(v));
    io::write_u64(os, ck.next_iteration);
    io::write_u64(os, ck.seed);
    io::write_u64(os, ck.config_hash);
    io::write_u32(os, static_cast<std::uint32_t>(ck.diagnostics.size()));
    for (const auto& d : ck.diagnostics) {
      io::write_u64(os, static_cast<std::uint64_t>(d.iter));
      io::write_f64(os, d.cost_estimate);
      io::write_f64(os, d.cost_stderr);
      io::write_f64(os, opt_or_nan(d.eps_ot2));
      io::write_f64(os, d.eps_fit);
      io::write_f64(os, opt_or_nan(d.contraction_ratio));
      io::write_f64(os, opt_or_nan(d.histogram_tv));
      io::write_u64(os, static_cast<std::uint64_t>(d.ots_steps));
      io::write_u32(os, static_cast<std::uint32_t>(d.ots_stop));
      io::write_u64(os, static_cast<std::uint64_t>(d.fit_steps));
      io::write_f64(os, d.fit_initial_loss);
      io::write_u32(os, static_cast<std::uint32_t>(d.fit_stop));
      io::write_f64(os, d.wall_ms);
    }
    if (!os) throw FormatError(FormatErrorKind::Io, "write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError(FormatErrorKind::Io, "cannot move checkpoint into place: " + ec.message());
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  char magic[4];
  io::read_bytes(is, magic, 4);
  if (std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError(FormatErrorKind::BadMagic, path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = io::read_u32(is);
  if (version != kCheckpointFormatVersion) {
    throw FormatError(FormatErrorKind::VersionMismatch,
                      path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.generator = read_mlp(is);
  const auto n = io::read_u32(is);
  ck.psi.resize(n);
  for (auto& v : ck.psi) {
    v = io::read_f32(is);
    if (!std::isfinite(v)) throw FormatError(FormatErrorKind::Malformed, path.string() + ": non-finite psi");
  }
  ck.next_iteration = io::read_u64(is);
  ck.seed = io::read_u64(is);
  ck.config_hash = io::read_u64(is);
  const auto rows = io::read_u32(is);
  if (rows > (1u << 24)) throw FormatError(FormatErrorKind::Malformed, path.string() + ": implausible row count");
  for (std::uint32_t r = 0; r < rows; ++r) {
    IterationDiagnostics d;
    d.iter = static_cast<std::int64_t>(io::read_u64(is));
    d.cost_estimate = io::read_f64(is);
    d.cost_stderr = io::read_f64(is);
    d.eps_ot2 = nan_to_opt(io::read_f64(is));
    d.eps_fit = io::read_f64(is);
    d.contraction_ratio = nan_to_opt(io::read_f64(is));
    d.histogram_tv = nan_to_opt(io::read_f64(is));
    d.ots_steps = static_cast<std::int64_t>(io::read_u64(is));
    const auto os = io::read_u32(is);
    if (os > 2) throw FormatError(FormatErrorKind::Malformed, path.string() + ": bad stop code");
    d.ots_stop = static_cast<StopReason>(os);
    d.fit_steps = static_cast<std::int64_t>(io::read_u64(is));
    d.fit_initial_loss = io::read_f64(is);
    const auto fs = io::read_u32(is);
    if (fs > 2) throw FormatError(FormatErrorKind::Malformed, path.string() + ": bad stop code");
    d.fit_stop = static_cast<FitStop>(fs);
    d.wall_ms = io::read_f64(is);
    ck.diagnostics.push_back(d);
  }
  is.peek();
  if (!is.eof()) throw FormatError(FormatErrorKind::Malformed, path.string() + ": trailing bytes");
  return ck;
}

namespace {

enum Stream : std::uint64_t { kTrainOts = 1, kEvalOts = 2, kEvalEstimate = 3, kHistogram = 4, kFit = 6 };

struct Evaluated {
  Estimate cost;
  std::vector<double> psi;
};

OtsConfig eval_config(const TrainConfig& c) {
  OtsConfig e = c.ots;
  e.plateau_tolerance = c.eval_plateau_tolerance;
  e.memorize = false;
  if (c.eval_max_steps > 0) e.max_steps = c.eval_max_steps;
  return e;
}

/// Cost estimate of sampler's pushforward starting from psi.
Estimate evaluate_cost(const TrainConfig& c, const CostSpec& spec, const PushforwardSampler& sampler,
                       const Dataset& dataset, std::span<const double> psi, std::uint64_t iter) {
  std::vector<double> eval_psi(psi.begin(), psi.end());
  if (c.evaluate_each_iteration) {
    Rng rng = make_rng(c.seed, {iter, kEvalOts});
    eval_psi = ots_solve(spec, sampler, dataset, eval_config(c), rng, psi).potential.values;
  }
  Rng rng = make_rng(c.seed, {iter, kEvalEstimate});
  return dual_objective_estimate(spec, sampler, dataset, eval_psi, c.eval_samples, rng);
}

TrainResult run(const TrainConfig& config, const Dataset& dataset, const CostSpec& spec, Checkpoint state,
                const IterationObserver& observer) {
  config.validate();
  if (config.checkpoint_every > 0 && config.checkpoint_dir.empty()) {
    throw InvalidInput("train checkpoint_every needs checkpoint_dir");
  }
  if (static_cast<std::size_t>(state.generator.output_dim()) != dataset.dim()) {
    throw InvalidInput("train: generator output dimension " + std::to_string(state.generator.output_dim()) +
                       " != dataset dimension " + std::to_string(dataset.dim()));
  }
  if (state.generator.input_dim() != config.latent.dim) {
    throw InvalidInput("train: generator input dimension != latent dimension");
  }
  if (!state.psi.empty() && state.psi.size() != dataset.size()) {
    throw InvalidInput("train: checkpoint psi length != dataset size");
  }

  TrainResult result;
  result.generator = std::move(state.generator);
  result.diagnostics = std::move(state.diagnostics);
  result.psi = std::move(state.psi);
  for (const auto& d : result.diagnostics) result.total_fit_steps += d.fit_steps;

  FitConfig fit_cfg = config.fit;
  fit_cfg.target_loss_fraction = config.fit_target_fraction();
  const double beta = spec.beta();
  const std::size_t hist_samples =
      config.histogram_samples > 0 ? config.histogram_samples : 400 * dataset.size();

  using Clock = std::chrono::steady_clock;
  for (std::uint64_t i = state.next_iteration; i < static_cast<std::uint64_t>(config.outer_iterations); ++i) {
    const auto t0 = Clock::now();
    IterationDiagnostics d;
    d.iter = static_cast<std::int64_t>(i);
    try {
      Generator& g = result.generator;
      const PushforwardSampler sampler(config.latent, &g, config.perturbation_sigma);

      Rng ots_rng = make_rng(config.seed, {i, kTrainOts});
      std::span<const double> init;
      if (config.warm_start_psi && !result.psi.empty()) init = result.psi;
      OtsResult solved = ots_solve(spec, sampler, dataset, config.ots, ots_rng, init);
      for (double& v : solved.potential.values) v = round_f32(v);
      d.ots_steps = solved.report.steps;
      d.ots_stop = solved.report.stop_reason;
      std::vector<double> psi = solved.potential.values;

      const Estimate cost = evaluate_cost(config, spec, sampler, dataset, psi, i);
      d.cost_estimate = std::max(cost.mean, 0.0);
      d.cost_stderr = cost.std_error;

      const MongeMap map(spec, dataset, std::move(solved), g.version(), config.perturbation_sigma);
      if (config.evaluate_each_iteration) {
        Rng hist_rng = make_rng(config.seed, {i, kHistogram});
        const auto hist = assignment_histogram(map, sampler, hist_samples, hist_rng);
        d.histogram_tv = histogram_tv(hist);
        if (config.estimate_eps_ot2) d.eps_ot2 = eps_ot2_from_histogram(spec, dataset, hist);
      }

      Rng fit_rng = make_rng(config.seed, {i, kFit});
      FitResult fitted = fit_solve(spec, sampler, g, map, fit_cfg, fit_rng);
      d.eps_fit = fitted.report.final_loss_beta;
      d.fit_steps = fitted.report.steps;
      d.fit_initial_loss = fitted.report.initial_loss;
      d.fit_stop = fitted.report.stop_reason;

      if (!result.diagnostics.empty()) {
        const double prev = std::pow(result.diagnostics.back().cost_estimate, beta);
        const double cur = std::pow(d.cost_estimate, beta);
        d.contraction_ratio = prev > 0.0 ? cur / prev : 0.0;
      }
      result.generator = std::move(fitted.generator);
      result.psi = std::move(psi);
    } catch (const SolverAbort& e) {
      throw SolverAbort("outer iteration " + std::to_string(i) + ": " + e.what(), e.step());
    }
    d.wall_ms = config.record_wall_time
                    ? std::chrono::duration<double, std::milli>(Clock::now() - t0).count()
                    : 0.0;
    result.total_fit_steps += d.fit_steps;
    result.diagnostics.push_back(d);
    if (observer) observer(d);
    if (!config.metrics_path.empty()) write_metrics(config.metrics_path, result.diagnostics);
    if (config.checkpoint_every > 0 && (i + 1) % static_cast<std::uint64_t>(config.checkpoint_every) == 0) {
      Checkpoint ck{result.generator, result.psi, i + 1, config.seed, config.hash(), result.diagnostics};
      checkpoint_save(checkpoint_path(config.checkpoint_dir, i + 1), ck);
    }

    const auto w = static_cast<std::size_t>(config.cost_plateau_window);
    if (config.cost_plateau_tolerance > 0.0 && result.diagnostics.size() > w) {
      const double then = result.diagnostics[result.diagnostics.size() - 1 - w].cost_estimate;
      const double now = d.cost_estimate;
      if (then > 0.0 && std::abs(now - then) / then < config.cost_plateau_tolerance) {
        result.stopped_on_plateau = true;
        break;
      }
    }
  }

  if (config.final_evaluation) {
    const PushforwardSampler sampler(config.latent, &result.generator, config.perturbation_sigma);
    const auto iter = static_cast<std::uint64_t>(config.outer_iterations) + 1000003ULL;
    Rng ots_rng = make_rng(config.seed, {iter, kTrainOts});
    std::span<const double> init;
    if (config.warm_start_psi && !result.psi.empty()) init = result.psi;
    auto solved = ots_solve(spec, sampler, dataset, config.ots, ots_rng, init);
    result.final_cost = evaluate_cost(config, spec, sampler, dataset, solved.potential.values, iter);
  }
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset, const CostSpec& spec, const Generator& g0,
                  const IterationObserver& observer) {
  if (!config.metrics_path.empty()) write_metrics(config.metrics_path, {});
  Checkpoint start{g0, {}, 0, config.seed, config.hash(), {}};
  return run(config, dataset, spec, std::move(start), observer);
}

TrainResult resume(const TrainConfig& config, const Dataset& dataset, const CostSpec& spec, const Checkpoint& ck,
                   const IterationObserver& observer) {
  if (ck.seed != config.seed) throw InvalidInput("resume: checkpoint seed differs from the config seed");
  if (ck.config_hash != config.hash()) throw InvalidInput("resume: checkpoint was written with a different config");
  if (ck.diagnostics.size() != ck.next_iteration) throw InvalidInput("resume: checkpoint diagnostics are incomplete");
  if (!config.metrics_path.empty()) write_metrics(config.metrics_path, ck.diagnostics);
  return run(config, dataset, spec, ck, observer);
}

}  // namespace otfit
