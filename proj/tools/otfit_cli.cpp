// otfit: train, evaluate and inspect semi-discrete OT generators.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "otfit/config.hpp"
#include "otfit/error.hpp"
#include "otfit/experiments.hpp"
#include "otfit/parallel.hpp"
#include "otfit/plot.hpp"
#include "otfit/trainer.hpp"

namespace fs = std::filesystem;
using namespace otfit;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool deterministic = false;
};

RunConfig load_config(const fs::path& path, const Globals& g) {
  RunConfig c = load_run_config(path);
  if (g.seed) c.train.seed = *g.seed;
  if (g.deterministic) c.train.record_wall_time = false;
  for (const auto* p : {&c.data.path, &c.data.test_path}) {
    if (!p->empty() && !fs::exists(*p)) throw ConfigError("dataset file not found: " + p->string(), 0, "data.path");
  }
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
  os << text;
}

/// Generator from a checkpoint (.otck) or a bare network file.
Generator load_generator(const fs::path& path, std::vector<double>* psi = nullptr) {
  try {
    Checkpoint ck = checkpoint_load(path);
    if (psi != nullptr) *psi = ck.psi;
    return std::move(ck.generator);
  } catch (const FormatError& e) {
    if (e.kind() != FormatErrorKind::BadMagic) throw;
  }
  if (psi != nullptr) throw InvalidInput(path.string() + " holds no potential; pass a training checkpoint");
  return load_mlp(path);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int cmd_train(const Globals& g, const fs::path& config_path, const std::optional<fs::path>& out_override,
              const std::optional<fs::path>& resume_from, std::optional<int> iterations) {
  RunConfig c = load_config(config_path, g);
  if (out_override) c.output_dir = *out_override;
  if (iterations) c.train.outer_iterations = *iterations;
  fs::create_directories(c.output_dir);
  write_file(c.output_dir / "resolved.cfg", resolved_config(c));

  const LoadedData data = load_data(c.data);
  c.train.metrics_path = c.output_dir / "metrics.csv";
  if (c.train.checkpoint_every > 0) {
    c.train.checkpoint_dir = c.output_dir / "checkpoints";
    fs::create_directories(c.train.checkpoint_dir);
  }

  std::printf("%5s %14s %12s %12s %12s %10s %10s\n", "iter", "cost", "stderr", "eps_ot2", "eps_fit", "ratio",
              "hist_tv");
  auto observer = [](const IterationDiagnostics& d) {
    std::printf("%5lld %14s %12s %12s %12s %10s %10s\n", static_cast<long long>(d.iter), fmt(d.cost_estimate).c_str(),
                fmt(d.cost_stderr).c_str(), d.eps_ot2 ? fmt(*d.eps_ot2).c_str() : "-", fmt(d.eps_fit).c_str(),
                d.contraction_ratio ? fmt(*d.contraction_ratio).c_str() : "-",
                d.histogram_tv ? fmt(*d.histogram_tv).c_str() : "-");
    std::fflush(stdout);
  };

  TrainResult result;
  if (resume_from) {
    const Checkpoint ck = checkpoint_load(*resume_from);
    result = resume(c.train, data.train, c.cost, ck, observer);
  } else {
    const Generator g0 = make_initial_generator(c, static_cast<int>(data.train.dim()), c.train.seed, &data.train);
    result = train(c.train, data.train, c.cost, g0, observer);
  }
  if (result.final_cost) {
    std::printf("final cost %s (stderr %s)\n", fmt(result.final_cost->mean).c_str(),
                fmt(result.final_cost->std_error).c_str());
  }
  if (result.stopped_on_plateau) std::printf("stopped early: cost plateau\n");

  save_mlp(c.output_dir / "generator.otsg", result.generator);
  Checkpoint final_ck{result.generator, result.psi, result.diagnostics.size(), c.train.seed, c.train.hash(),
                      result.diagnostics};
  checkpoint_save(c.output_dir / "final.otck", final_ck);

  if (c.dump_samples > 0) {
    const PushforwardSampler sampler(c.train.latent, &result.generator);
    Rng rng = make_rng(c.train.seed, {0xd0, 1});
    SampleDump dump{sampler.sample_points(rng, c.dump_samples), data.train.points()};
    write_sample_dump(c.output_dir / "samples.csv", dump);
  }
  std::printf("outputs in %s\n", c.output_dir.string().c_str());
  return 0;
}

int cmd_eval_wd(const Globals& g, const fs::path& generator_path, const fs::path& config_path,
                const std::optional<std::string>& metric, std::optional<double> p) {
  RunConfig c = load_config(config_path, g);
  if (metric) c.cost = CostSpec(parse_metric(*metric), c.cost.exponent());
  if (p) c.cost = CostSpec(c.cost.metric(), *p);
  const LoadedData data = load_data(c.data);
  const Generator gen = load_generator(generator_path);
  const PushforwardSampler sampler(c.train.latent, &gen);
  const WdConfig w = wd_config(c);
  const std::uint64_t seed = c.train.seed;

  const WdReport tr = eval_wd(c.cost, sampler, data.train, w, seed);
  std::printf("split,n,wd,stderr,wd_root,ots_steps\n");
  std::printf("train,%zu,%s,%s,%s,%lld\n", data.train.size(), fmt(tr.wd).c_str(), fmt(tr.std_error).c_str(),
              fmt(tr.wd_root).c_str(), static_cast<long long>(tr.ots_steps));
  if (data.test) {
    const WdReport te = eval_wd(c.cost, sampler, *data.test, w, seed);
    std::printf("test,%zu,%s,%s,%s,%lld\n", data.test->size(), fmt(te.wd).c_str(), fmt(te.std_error).c_str(),
                fmt(te.wd_root).c_str(), static_cast<long long>(te.ots_steps));
    std::printf("relative gap |test - train| / train = %s\n", fmt(std::abs(te.wd - tr.wd) / tr.wd).c_str());
  }
  return 0;
}

int cmd_ablate(const Globals& g, const fs::path& config_path, const std::optional<fs::path>& out_override, int seeds) {
  RunConfig c = load_config(config_path, g);
  if (out_override) c.output_dir = *out_override;
  const LoadedData data = load_data(c.data);
  fs::create_directories(c.output_dir);
  std::string csv = "seed,initial_wd,alternating_wd,alternating_stderr,nonalternating_wd,nonalternating_stderr,fit_steps\n";
  int wins = 0;
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t seed = c.train.seed + static_cast<std::uint64_t>(k);
    const Generator g0 = make_initial_generator(c, static_cast<int>(data.train.dim()), seed, &data.train);
    const AblationReport r = run_ablation(c, data.train, g0, seed);
    wins += r.alternating_wd <= r.nonalternating_wd ? 1 : 0;
    std::printf("seed %llu: initial %s  alternating %s  non-alternating %s  (FIT steps %lld)\n",
                static_cast<unsigned long long>(seed), fmt(r.initial_wd).c_str(), fmt(r.alternating_wd).c_str(),
                fmt(r.nonalternating_wd).c_str(), static_cast<long long>(r.fit_step_budget));
    csv += std::to_string(seed) + "," + fmt(r.initial_wd) + "," + fmt(r.alternating_wd) + "," +
           fmt(r.alternating_stderr) + "," + fmt(r.nonalternating_wd) + "," + fmt(r.nonalternating_stderr) + "," +
           std::to_string(r.fit_step_budget) + "\n";
  }
  write_file(c.output_dir / "ablation.csv", csv);
  std::printf("alternating <= non-alternating in %d of %d seeds\n", wins, seeds);
  return 0;
}

int cmd_verify_psi(const Globals& g, const fs::path& checkpoint, const fs::path& config_path,
                   const std::optional<fs::path>& out_override) {
  RunConfig c = load_config(config_path, g);
  if (out_override) c.output_dir = *out_override;
  const LoadedData data = load_data(c.data);
  std::vector<double> psi;
  load_generator(checkpoint, &psi);
  const auto rep = verify_psi(data.train, psi, data.test ? &*data.test : nullptr, c.psi, c.train.seed);
  fs::create_directories(c.output_dir);
  std::string scatter = "split,psi_hat,fitted\n";
  for (const auto& r : rep.scatter) {
    scatter += std::string(r.train ? "train" : "test") + "," + (r.train ? fmt(r.psi) : "") + "," + fmt(r.fitted) + "\n";
  }
  write_file(c.output_dir / "psi_scatter.csv", scatter);
  std::string loss = "step,loss\n";
  for (std::size_t k = 0; k < rep.loss_trace.size(); ++k) loss += std::to_string(k) + "," + fmt(rep.loss_trace[k]) + "\n";
  write_file(c.output_dir / "psi_loss.csv", loss);
  std::printf("train mse %s (psi scale %s), correlation %s, smoothed loss non-increasing: %s\n",
              fmt(rep.train_mse).c_str(), fmt(rep.psi_scale).c_str(), fmt(rep.correlation).c_str(),
              rep.smoothed_non_increasing ? "yes" : "no");
  if (!rep.test_predictions.empty()) {
    std::printf("%zu test predictions written (no ground-truth psi on the test split)\n", rep.test_predictions.size());
  }
  return 0;
}

int cmd_export(const fs::path& input, const fs::path& out_dir, double lo, double hi) {
  std::ifstream is(input);
  if (!is) throw FormatError(FormatErrorKind::Io, "cannot open " + input.string());
  std::string first;
  std::getline(is, first);
  ExportResult r;
  if (first.rfind("iter,", 0) == 0) {
    r = export_metrics(input, out_dir);
  } else {
    r = export_samples(input, out_dir, {lo, hi}, {lo, hi});
  }
  std::printf("csv: %s\n", r.csv.string().c_str());
  if (r.svg) std::printf("svg: %s\n", r.svg->string().c_str());
  if (!r.notice.empty()) std::printf("%s\n", r.notice.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-discrete optimal transport generator training"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the run seed");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", g.deterministic, "Fixed-order reductions; wall_ms written as 0");

  fs::path config, out, resume_path, generator, checkpoint, input;
  std::optional<int> iterations;
  std::optional<std::string> metric;
  std::optional<double> p;
  int seeds = 1;
  double lo = -1.5, hi = 1.5;

  auto* train = app.add_subcommand("train", "Alternate OTS and FIT from a config file");
  train->add_option("config", config, "Run config")->required();
  auto* out_opt = train->add_option("--out", out, "Output directory (overrides train.output_dir)");
  auto* resume_opt = train->add_option("--resume", resume_path, "Continue from a checkpoint");
  train->add_option("--iterations", iterations, "Override train.outer_iterations");

  auto* eval = app.add_subcommand("eval-wd", "Wasserstein estimate of a generator on train/test data");
  eval->add_option("generator", generator, "Checkpoint or generator file")->required();
  eval->add_option("--config", config, "Run config naming the data and cost")->required();
  eval->add_option("--metric", metric, "Override the ground metric (l1, l2)");
  eval->add_option("--p", p, "Override the cost exponent");

  auto* ablate = app.add_subcommand("ablate", "Alternating vs single-plan training under equal FIT budgets");
  ablate->add_option("config", config, "Run config")->required();
  auto* ablate_out = ablate->add_option("--out", out, "Output directory (overrides train.output_dir)");
  ablate->add_option("--seeds", seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify-psi", "Fit a network to a trained potential");
  verify->add_option("checkpoint", checkpoint, "Training checkpoint")->required();
  verify->add_option("--config", config, "Run config")->required();
  auto* verify_out = verify->add_option("--out", out, "Output directory (overrides train.output_dir)");

  auto* exp = app.add_subcommand("export", "CSV and SVG from a metrics log or sample dump");
  exp->add_option("input", input, "metrics.csv or samples.csv")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out, "Output directory")->required();
  exp->add_option("--min", lo, "Scatter axis minimum");
  exp->add_option("--max", hi, "Scatter axis maximum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (*seed_opt) g.seed = seed;
  set_thread_count(g.threads);

  try {
    if (*train) {
      return cmd_train(g, config, *out_opt ? std::optional<fs::path>(out) : std::nullopt,
                       *resume_opt ? std::optional<fs::path>(resume_path) : std::nullopt, iterations);
    }
    if (*eval) return cmd_eval_wd(g, generator, config, metric, p);
    if (*ablate) return cmd_ablate(g, config, *ablate_out ? std::optional<fs::path>(out) : std::nullopt, seeds);
    if (*verify) return cmd_verify_psi(g, checkpoint, config, *verify_out ? std::optional<fs::path>(out) : std::nullopt);
    if (*exp) return cmd_export(input, out, lo, hi);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
