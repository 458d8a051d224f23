#include "otfit/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <Eigen/Eigenvalues>
#include <limits>
#include <numbers>
#include <numeric>

#include "otfit/error.hpp"
#include "otfit/fitting.hpp"
#include "otfit/trainer.hpp"
#include "otfit/transport.hpp"

namespace otfit {

LoadedData load_data(const DataConfig& data) {
  Dataset train, raw_test;
  bool has_test = false;
  if (data.kind == "idx") {
    train = load_idx_images(data.path, data.limit);
    if (!data.test_path.empty()) {
      raw_test = load_idx_images(data.test_path, data.test_limit);
      has_test = true;
    }
  } else if (data.kind == "csv") {
    train = load_csv_points(data.path);
    if (!data.test_path.empty()) {
      raw_test = load_csv_points(data.test_path);
      has_test = true;
    }
  } else {
    SyntheticSpec s = data.synthetic;
    s.kind = parse_synthetic_kind(data.kind);
    train = generate_synthetic(s);
    if (data.test_points > 0) {
      s.seed = data.test_seed;
      s.n_points = data.test_points;
      raw_test = generate_synthetic(s);
      has_test = true;
    }
  }
  auto norm = normalize(train, data.normalize);
  LoadedData out{std::move(norm.dataset), std::nullopt, std::move(norm.transform)};
  if (has_test) {
    if (raw_test.dim() != out.train.dim()) throw InvalidInput("test data dimension differs from train data");
    out.test = Dataset(out.transform.apply(raw_test.points()), raw_test.source_tag());
  }
  return out;
}

namespace {

// Adam L2 regression of g onto target(z) over fresh latent batches.
template <class Target>
void prefit_regression(Generator& g, const RunConfig& config, std::uint64_t seed, Target target) {
  constexpr std::size_t kBatch = 256;
  Rng data_rng = make_rng(seed, {0x6e7, 1});
  ForwardTape tape;
  GradientBuffer grads(g);
  AdamState adam;
  for (std::int64_t step = 0; step < config.net.prefit_steps; ++step) {
    const Eigen::MatrixXf z = config.train.latent.sample(data_rng, kBatch);
    const Eigen::MatrixXf out = g.forward(z, tape);
    grads.clear();
    g.backward(tape, 2.0f * (out - target(z)), grads);
    adam_update(g, grads, config.net.prefit_learning_rate, adam, step);
  }
}

}  // namespace

Generator make_initial_generator(const RunConfig& config, int output_dim, std::uint64_t seed, const Dataset* data) {
  const auto& latent = config.train.latent;
  std::vector<int> widths = {latent.dim};
  widths.insert(widths.end(), config.net.hidden.begin(), config.net.hidden.end());
  widths.push_back(output_dim);
  Rng rng = make_rng(seed, {0x6e7});
  Generator g = Mlp::xavier(widths, rng);
  if (config.net.prefit == "line" && config.net.prefit_steps > 0) {
    const int common = std::min(latent.dim, output_dim);
    prefit_regression(g, config, seed, [&](const Eigen::MatrixXf& z) {
      Eigen::MatrixXf target = Eigen::MatrixXf::Zero(output_dim, z.cols());
      for (int k = 0; k < common; ++k) {
        const auto s = static_cast<float>(k == 0 ? config.net.prefit_scale_x : config.net.prefit_scale_y);
        target.row(k) = s * z.row(k);
      }
      return target;
    });
  } else if (config.net.prefit == "pca" && config.net.prefit_steps > 0) {
    if (data == nullptr || data->size() == 0 || static_cast<int>(data->dim()) != output_dim) {
      throw InvalidInput("prefit pca needs the training data");
    }
    // z -> mean + sum_k sqrt(lambda_k) u_k z_k over the top principal axes.
    const auto n = static_cast<Eigen::Index>(data->size());
    Eigen::MatrixXd x(output_dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const PointView p = (*data)[static_cast<std::size_t>(i)];
      for (int k = 0; k < output_dim; ++k) x(k, i) = p[static_cast<std::size_t>(k)];
    }
    const Eigen::VectorXd mean = x.rowwise().mean();
    x.colwise() -= mean;
    const Eigen::MatrixXd cov = x * x.transpose() / static_cast<double>(n);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const int axes = std::min(latent.dim, output_dim);
    Eigen::MatrixXf basis = Eigen::MatrixXf::Zero(output_dim, latent.dim);
    for (int k = 0; k < axes; ++k) {
      const int col = output_dim - 1 - k;
      const double sd = std::sqrt(std::max(eig.eigenvalues()(col), 0.0));
      basis.col(k) = (sd * eig.eigenvectors().col(col)).cast<float>();
    }
    const Eigen::VectorXf offset = mean.cast<float>();
    prefit_regression(g, config, seed,
                      [&](const Eigen::MatrixXf& z) -> Eigen::MatrixXf { return (basis * z).colwise() + offset; });
  }
  g.set_version(0);
  return g;
}

WdConfig wd_config(const RunConfig& config) {
  WdConfig w;
  w.ots = config.train.ots;
  if (config.train.eval_max_steps > 0) w.ots.max_steps = config.train.eval_max_steps;
  w.samples = config.train.eval_samples;
  w.plateau_tolerance = config.train.eval_plateau_tolerance;
  return w;
}

WdReport eval_wd(const CostSpec& spec, const PushforwardSampler& sampler, const Dataset& dataset,
                 const WdConfig& config, std::uint64_t seed) {
  if (sampler.output_dim() != dataset.dim()) {
    throw InvalidInput("eval_wd: generator output dimension " + std::to_string(sampler.output_dim()) +
                       " != dataset dimension " + std::to_string(dataset.dim()));
  }
  OtsConfig ots = config.ots;
  ots.plateau_tolerance = config.plateau_tolerance;
  ots.memorize = false;
  Rng solve_rng = make_rng(seed, {0xe7a1, 1});
  const auto solved = ots_solve(spec, sampler, dataset, ots, solve_rng);
  Rng est_rng = make_rng(seed, {0xe7a1, 2});
  const auto est = dual_objective_estimate(spec, sampler, dataset, solved.potential.values, config.samples, est_rng);
  WdReport r;
  r.wd = est.mean;
  r.std_error = est.std_error;
  r.wd_root = std::pow(std::max(est.mean, 0.0), spec.beta());
  r.ots_steps = solved.report.steps;
  r.stop = solved.report.stop_reason;
  return r;
}

AblationReport run_ablation(const RunConfig& config, const Dataset& dataset, const Generator& g0, std::uint64_t seed) {
  const auto& spec = config.cost;
  TrainConfig tc = config.train;
  tc.seed = seed;
  tc.final_evaluation = false;
  tc.evaluate_each_iteration = false;
  tc.estimate_eps_ot2 = false;
  tc.checkpoint_every = 0;
  tc.metrics_path.clear();

  AblationReport rep;
  const WdConfig wcfg = wd_config(config);
  const std::uint64_t eval_seed = seed ^ 0xab1a7e5ULL;
  {
    const PushforwardSampler s0(tc.latent, &g0, tc.perturbation_sigma);
    rep.initial_wd = eval_wd(spec, s0, dataset, wcfg, eval_seed).wd;
  }

  // (a) alternating.
  const TrainResult alt = train(tc, dataset, spec, g0);
  rep.fit_step_budget = alt.total_fit_steps;
  rep.outer_iterations_run = static_cast<int>(alt.diagnostics.size());
  {
    const PushforwardSampler s(tc.latent, &alt.generator, tc.perturbation_sigma);
    const auto w = eval_wd(spec, s, dataset, wcfg, eval_seed);
    rep.alternating_wd = w.wd;
    rep.alternating_stderr = w.std_error;
  }

  // (b) one plan, then fit toward it with the same FIT budget.
  Generator g = g0;
  if (rep.fit_step_budget > 0) {
    const PushforwardSampler s(tc.latent, &g0, tc.perturbation_sigma);
    Rng ots_rng = make_rng(seed, {0, 1});
    OtsResult solved = ots_solve(spec, s, dataset, tc.ots, ots_rng);
    const MongeMap map(spec, dataset, std::move(solved), g0.version(), tc.perturbation_sigma);
    FitConfig fc = tc.fit;
    fc.max_steps = rep.fit_step_budget;
    fc.target_loss_fraction = 1e-9;
    fc.plateau_tolerance = 0.0;
    Rng fit_rng = make_rng(seed, {0, 6});
    g = fit_solve(spec, s, g0, map, fc, fit_rng).generator;
  }
  {
    const PushforwardSampler s(tc.latent, &g, tc.perturbation_sigma);
    const auto w = eval_wd(spec, s, dataset, wcfg, eval_seed);
    rep.nonalternating_wd = w.wd;
    rep.nonalternating_stderr = w.std_error;
  }
  return rep;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("pearson: need two equal-length series of >= 2 values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return saa == sbb ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

VerifyPsiReport verify_psi(const Dataset& train, std::span<const double> psi, const Dataset* test,
                           const PsiConfig& config, std::uint64_t seed) {
  if (psi.size() != train.size()) {
    throw InvalidInput("verify_psi: psi length " + std::to_string(psi.size()) + " != train size " +
                       std::to_string(train.size()));
  }
  if (test != nullptr && test->dim() != train.dim()) throw InvalidInput("verify_psi: test dimension mismatch");
  const std::size_t n = train.size();
  const double mean = std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(n);
  double var = 0.0, max_abs = 0.0;
  for (double v : psi) {
    var += (v - mean) * (v - mean);
    max_abs = std::max(max_abs, std::abs(v));
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  const double scale = sd > 0.0 ? sd : 1.0;

  VerifyPsiReport rep;
  rep.psi_scale = sd > 0.0 ? sd : max_abs;

  std::vector<int> widths = {static_cast<int>(train.dim())};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(1);
  Rng rng = make_rng(seed, {0x951});
  Mlp net = Mlp::xavier(widths, rng);

  const Eigen::MatrixXf x = to_matrix(train.points());
  Eigen::MatrixXf t(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) t(0, static_cast<Eigen::Index>(i)) = static_cast<float>((psi[i] - mean) / scale);

  ForwardTape tape;
  GradientBuffer grads(net);
  AdamState adam;
  const double unit = scale * scale;
  for (std::int64_t step = 0; step < config.steps; ++step) {
    const Eigen::MatrixXf out = net.forward(x, tape);
    const Eigen::MatrixXf r = out - t;
    rep.loss_trace.push_back(static_cast<double>(r.squaredNorm()) / static_cast<double>(n) * unit);
    grads.clear();
    net.backward(tape, 2.0f * r, grads);
    double lr = config.learning_rate;
    if (config.cosine_decay) {
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(config.steps)));
    }
    adam_update(net, grads, lr, adam, step);
  }

  const Eigen::MatrixXf fitted_std = net.forward(x);
  std::vector<double> fitted(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fitted[i] = mean + scale * fitted_std(0, static_cast<Eigen::Index>(i));
    sq += (fitted[i] - psi[i]) * (fitted[i] - psi[i]);
  }
  rep.train_mse = sq / static_cast<double>(n);
  rep.correlation = n >= 2 ? pearson(psi, fitted) : 1.0;

  const auto block = static_cast<std::size_t>(config.smoothing);
  for (std::size_t b = 0; b + block <= rep.loss_trace.size(); b += block) {
    double s = 0.0;
    for (std::size_t k = b; k < b + block; ++k) s += rep.loss_trace[k];
    rep.smoothed_loss.push_back(s / static_cast<double>(block));
  }
  // Rises below the float32 resolution of the regressor are noise.
  const double floor = std::pow(std::numeric_limits<float>::epsilon() * rep.psi_scale, 2);
  rep.smoothed_non_increasing = true;
  for (std::size_t k = 1; k < rep.smoothed_loss.size(); ++k) {
    if (rep.smoothed_loss[k] > rep.smoothed_loss[k - 1] + floor) rep.smoothed_non_increasing = false;
  }

  auto pick = [&](std::size_t total) {
    std::vector<std::size_t> idx;
    const std::size_t m = std::min(config.scatter_points, total);
    for (std::size_t k = 0; k < m; ++k) idx.push_back(k * total / m);
    return idx;
  };
  for (std::size_t i : pick(n)) rep.scatter.push_back({true, psi[i], fitted[i]});
  if (test != nullptr) {
    const Eigen::MatrixXf pred = net.forward(to_matrix(test->points()));
    rep.test_predictions.resize(test->size());
    for (std::size_t i = 0; i < test->size(); ++i) {
      rep.test_predictions[i] = mean + scale * pred(0, static_cast<Eigen::Index>(i));
    }
    for (std::size_t i : pick(test->size())) rep.scatter.push_back({false, std::nan(""), rep.test_predictions[i]});
  }
  return rep;
}

}  // namespace otfit
