// End-to-end acceptance run: prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Arguments select criteria by
// number.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "otfit/config.hpp"
#include "otfit/costs.hpp"
#include "otfit/experiments.hpp"
#include "otfit/netcore.hpp"
#include "otfit/oracle.hpp"
#include "otfit/potential.hpp"
#include "otfit/trainer.hpp"

namespace fs = std::filesystem;
using namespace otfit;

namespace {

const fs::path kSource = OTFIT_SOURCE_DIR;
const std::string kCli = OTFIT_CLI_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::vector<int> selected;  // empty runs everything

bool wanted(int id) { return selected.empty() || std::find(selected.begin(), selected.end(), id) != selected.end(); }

void report(int id, const std::string& name, const Outcome& o, double seconds) {
  std::printf("criterion %2d %-28s %s  (%.1f s)  %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", seconds,
              o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs `body`, adds the runtime limit to its verdict and prints the line.
void criterion(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  if (!wanted(id)) return;
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = seconds_since(t0);
  if (limit_s > 0 && s > limit_s) {
    o.pass = false;
    o.detail += " [over the " + std::to_string(static_cast<int>(limit_s)) + " s limit]";
  }
  report(id, name, o, s);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct MetricsRow {
  double cost = 0.0;
  double stderr_ = 0.0;
  std::string tv;
  std::string ratio;
};

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    f.resize(10);
    rows.push_back({std::stod(f[1]), std::stod(f[6]), f[7], f[4]});
  }
  return rows;
}

/// "final cost X (stderr Y)" from a train log.
bool final_cost(const fs::path& log, double& mean, double& se) {
  std::ifstream is(log);
  for (std::string line; std::getline(is, line);) {
    if (std::sscanf(line.c_str(), "final cost %lf (stderr %lf)", &mean, &se) == 2) return true;
  }
  return false;
}

Outcome analytic_1d() {
  OtsConfig c;
  c.learning_rate = 0.05;
  c.batch_size = 64;
  c.max_steps = 20000;
  c.lr_schedule = LrSchedule::HalveOnStall;
  c.averaging = true;
  c.snapshot_check = true;
  c.window_samples_per_target = 10000;
  c.histogram_tolerance = 0.005;
  const Dataset ys(PointSet(1, std::vector<double>{0.0, 1.0}), "pair");
  const PushforwardSampler mu(LatentSource::uniform_box(1, 0.0, 1.0));
  Outcome o{true, ""};
  for (const CostSpec spec : {CostSpec(Metric::L1, 1.0), CostSpec(Metric::L2, 2.0)}) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_rng(31);
    const auto r = ots_solve(spec, mu, ys, c, rng);
    const double s = seconds_since(t0);
    const auto exact = analytic_1d_semidiscrete(spec, 0.0, 1.0);
    Rng est_rng = make_rng(32);
    const auto est = dual_objective_estimate(spec, mu, ys, r.potential.values, 200000, est_rng);
    const double tol = spec.exponent() == 1.0 ? 0.02 : 0.01;
    const double gap = std::abs(r.potential.values[0] - r.potential.values[1]);
    const bool ok = std::abs(est.mean - exact.cost) <= tol && gap <= 0.02 && r.report.steps <= 20000 && s < 30.0;
    o.pass = o.pass && ok;
    o.detail += "p=" + fmt(spec.exponent()) + ": dual " + fmt(est.mean) + " vs " + fmt(exact.cost) + ", psi gap " +
                fmt(gap) + ", " + std::to_string(r.report.steps) + " steps, " + fmt(s) + " s; ";
  }
  return o;
}

struct OracleRun {
  double dual = 0.0;
  double dual_se = 0.0;
  double dual_exact = 0.0;
  double oracle = 0.0;
};

std::vector<OracleRun> oracle_runs;

Outcome oracle_agreement() {
  Rng gen = make_rng(2024);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  std::uniform_int_distribution<int> targets_n(2, 8);
  const CostSpec specs[] = {CostSpec(Metric::L2, 2.0), CostSpec(Metric::L1, 1.0), CostSpec(Metric::L2, 1.0)};
  OtsConfig c;
  c.learning_rate = 0.05;
  c.batch_size = 64;
  c.max_steps = 20000;
  c.lr_schedule = LrSchedule::HalveOnStall;
  c.averaging = true;
  c.snapshot_check = true;
  c.histogram_tolerance = 0.02;
  c.lr_min = 0.005;
  int agree = 0;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const CostSpec spec = specs[k % 3];
    PointSet src(200, 2), tgt(static_cast<std::size_t>(targets_n(gen)), 2);
    for (auto& v : src.data()) v = n01(gen);
    for (auto& v : tgt.data()) v = box(gen);
    const Dataset ys(tgt, "targets");
    const PushforwardSampler mu(LatentSource::empirical(src));
    Rng rng = make_rng(100 + static_cast<std::uint64_t>(k));
    const auto r = ots_solve(spec, mu, ys, c, rng);
    Rng est_rng = make_rng(200 + static_cast<std::uint64_t>(k));
    const auto est = dual_objective_estimate(spec, mu, ys, r.potential.values, 50000, est_rng);
    OracleRun run;
    run.dual = est.mean;
    run.dual_se = est.std_error;
    run.dual_exact = dual_objective(spec, src, {}, ys, r.potential.values);
    run.oracle = exact_ot_cost(spec, DiscreteMeasure::uniform(src), DiscreteMeasure::uniform(tgt)).cost;
    oracle_runs.push_back(run);
    const double err = std::abs(run.dual - run.oracle);
    worst = std::max(worst, err / run.oracle);
    if (err <= 0.05 * run.oracle + 3.0 * run.dual_se) ++agree;
  }
  return {agree == 20, std::to_string(agree) + "/20 within 5% + 3 stderr, worst relative error " + fmt(worst)};
}

Outcome weak_duality() {
  int violations = 0;
  double worst = -INFINITY;
  for (const auto& r : oracle_runs) {
    if (r.dual > r.oracle + 1e-6 + 3.0 * r.dual_se) ++violations;
    if (r.dual_exact > r.oracle + 1e-6) ++violations;
    worst = std::max(worst, r.dual_exact - r.oracle);
  }
  return {!oracle_runs.empty() && violations == 0,
          std::to_string(violations) + " violations over " + std::to_string(oracle_runs.size()) +
              " runs; max exact dual - oracle " + fmt(worst)};
}

Outcome convexity() {
  Rng rng = make_rng(4);
  std::normal_distribution<double> n01;
  const CostSpec specs[] = {CostSpec(Metric::L2, 2.0), CostSpec(Metric::L1, 1.0)};
  PointSet src(400, 2), tgt(40, 2);
  for (auto& v : src.data()) v = n01(rng);
  for (auto& v : tgt.data()) v = n01(rng);
  const Dataset ys(tgt, "targets");
  int bad = 0;
  double worst = -INFINITY;
  for (int k = 0; k < 1000; ++k) {
    const CostSpec& spec = specs[k % 2];
    std::vector<double> a(40), b(40), m(40);
    for (std::size_t i = 0; i < 40; ++i) {
      a[i] = n01(rng);
      b[i] = n01(rng);
      m[i] = 0.5 * (a[i] + b[i]);
    }
    // The loss is the negated dual objective.
    const double la = -dual_objective(spec, src, {}, ys, a);
    const double lb = -dual_objective(spec, src, {}, ys, b);
    const double lm = -dual_objective(spec, src, {}, ys, m);
    const double excess = lm - 0.5 * (la + lb);
    worst = std::max(worst, excess);
    if (excess > 1e-9) ++bad;
  }
  return {bad == 0, std::to_string(bad) + "/1000 probes violated; max excess " + fmt(worst)};
}

struct RefNet {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  explicit RefNet(const Mlp& g) {
    for (const auto& L : g.layers()) {
      w.push_back(L.weights.cast<double>());
      b.push_back(L.biases.cast<double>());
    }
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& z, double* margin = nullptr) const {
    Eigen::VectorXd h = z;
    for (std::size_t l = 0; l < w.size(); ++l) {
      Eigen::VectorXd a = w[l] * h + b[l];
      if (l + 1 < w.size()) {
        if (margin) *margin = std::min(*margin, a.cwiseAbs().minCoeff());
        a = a.cwiseMax(0.0);
      }
      h = a;
    }
    return h;
  }
};

Outcome gradients() {
  Rng rng = make_rng(5);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> width(1, 8), depth(1, 3);
  const double h = 1e-5;
  int net_ok = 0, net_n = 0;
  double net_worst = 0.0;
  while (net_n < 25) {
    std::vector<int> widths{width(rng)};
    const int layers = depth(rng);
    for (int l = 0; l < layers; ++l) widths.push_back(width(rng));
    Mlp g = Mlp::xavier(widths, rng);
    for (auto& L : g.mutable_layers()) {
      for (int i = 0; i < L.biases.size(); ++i) L.biases(i) = static_cast<float>(0.3 * n01(rng));
    }
    Point z(widths.front());
    for (auto& v : z) v = n01(rng);
    std::vector<double> u(widths.back());
    for (auto& v : u) v = n01(rng);
    const RefNet ref(g);
    const Eigen::VectorXd zd = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    const Eigen::VectorXd ud = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
    double margin = INFINITY;
    ref.forward(zd, &margin);
    if (margin < 1e-3) continue;
    const GradientBuffer grad = backward(g, z, u);
    auto objective = [&](const RefNet& net) { return net.forward(zd).dot(ud); };
    double num = 0.0, den = 0.0;
    auto probe = [&](const RefNet& p, const RefNet& m, double analytic) {
      const double fd = (objective(p) - objective(m)) / (2.0 * h);
      num += (fd - analytic) * (fd - analytic);
      den += fd * fd;
    };
    for (std::size_t l = 0; l < ref.w.size(); ++l) {
      for (Eigen::Index i = 0; i < ref.w[l].size(); ++i) {
        RefNet p = ref, m = ref;
        p.w[l].data()[i] += h;
        m.w[l].data()[i] -= h;
        probe(p, m, grad.layers()[l].weights.data()[i]);
      }
      for (Eigen::Index i = 0; i < ref.b[l].size(); ++i) {
        RefNet p = ref, m = ref;
        p.b[l](i) += h;
        m.b[l](i) -= h;
        probe(p, m, grad.layers()[l].biases(i));
      }
    }
    const double rel = den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
    net_worst = std::max(net_worst, rel);
    ++net_n;
    if (rel <= 1e-4) ++net_ok;
  }

  const CostSpec specs[] = {CostSpec(Metric::L2, 2.0), CostSpec(Metric::L2, 1.0), CostSpec(Metric::L1, 1.0),
                            CostSpec(Metric::L1, 2.0), CostSpec(Metric::L2, 3.0)};
  std::uniform_int_distribution<int> dim(1, 5);
  int cost_ok = 0, cost_n = 0;
  double cost_worst = 0.0;
  const double hc = 1e-6;
  while (cost_n < 25) {
    const CostSpec& spec = specs[cost_n % 5];
    const int d = dim(rng);
    Point x(d), y(d);
    for (int k = 0; k < d; ++k) {
      x[k] = n01(rng);
      y[k] = n01(rng);
    }
    bool near_kink = false;
    for (int k = 0; k < d; ++k) near_kink = near_kink || std::abs(x[k] - y[k]) < 1e-3;
    if (near_kink) continue;
    const Point g = cost_gradient_x(spec, x, y);
    double num = 0.0, den = 0.0;
    for (int k = 0; k < d; ++k) {
      Point xp = x, xm = x;
      xp[k] += hc;
      xm[k] -= hc;
      const double fd = (cost(spec, xp, y) - cost(spec, xm, y)) / (2.0 * hc);
      num += (fd - g[k]) * (fd - g[k]);
      den += fd * fd;
    }
    const double rel = std::sqrt(num / den);
    cost_worst = std::max(cost_worst, rel);
    ++cost_n;
    if (rel <= 1e-4) ++cost_ok;
  }
  return {net_ok == net_n && cost_ok == cost_n,
          "backward " + std::to_string(net_ok) + "/" + std::to_string(net_n) + " (worst " + fmt(net_worst) +
              "), cost gradient " + std::to_string(cost_ok) + "/" + std::to_string(cost_n) + " (worst " +
              fmt(cost_worst) + ")"};
}

struct RingRuns {
  fs::path dir;
  fs::path config;
  int exit_a = -1;
  double seconds_a = 0.0;
};

RingRuns ring;

/// ring.cfg with per-iteration checkpoints.
void prepare_ring(const fs::path& work) {
  ring.dir = work;
  fs::create_directories(work);
  ring.config = work / "ring.cfg";
  std::ofstream(ring.config) << slurp(kSource / "configs" / "ring.cfg") << "\n[train]\ncheckpoint_every = 1\n";
  const auto t0 = std::chrono::steady_clock::now();
  ring.exit_a = run_cli("--deterministic train " + ring.config.string() + " --out " + (work / "a").string(),
                        work / "a.log");
  ring.seconds_a = seconds_since(t0);
}

Outcome contraction() {
  if (ring.exit_a != 0) return {false, "train exited with " + std::to_string(ring.exit_a)};
  const auto rows = read_metrics(ring.dir / "a" / "metrics.csv");
  double fin = 0.0, fin_se = 0.0;
  if (rows.size() != 10 || !final_cost(ring.dir / "a.log", fin, fin_se)) return {false, "incomplete run"};
  std::vector<double> c, se;
  for (const auto& r : rows) {
    c.push_back(r.cost);
    se.push_back(r.stderr_);
  }
  c.push_back(fin);
  se.push_back(fin_se);
  int rises = 0;
  std::string trace;
  for (std::size_t i = 0; i < c.size(); ++i) {
    trace += (i ? " " : "") + fmt(c[i]);
    if (i > 0 && c[i] - c[i - 1] > 3.0 * std::hypot(se[i], se[i - 1])) ++rises;
  }
  const bool ok = rises == 0 && fin <= 0.2 * c.front() && ring.seconds_a < 600.0;
  return {ok, "costs " + trace + "; " + std::to_string(rises) + " significant rises; final/initial " +
                  fmt(fin / c.front()) + "; train " + fmt(ring.seconds_a) + " s"};
}

Outcome uniformity() {
  if (ring.exit_a != 0) return {false, "no training run"};
  double worst = 0.0;
  bool ok = true;
  for (const auto& r : read_metrics(ring.dir / "a" / "metrics.csv")) {
    if (r.tv.empty()) {
      ok = false;
      continue;
    }
    worst = std::max(worst, std::stod(r.tv));
  }
  return {ok && worst <= 0.05, "max histogram TV " + fmt(worst)};
}

Outcome determinism() {
  if (ring.exit_a != 0) return {false, "no first run"};
  const int code = run_cli("--deterministic train " + ring.config.string() + " --out " + (ring.dir / "b").string(),
                           ring.dir / "b.log");
  if (code != 0) return {false, "second run exited with " + std::to_string(code)};
  const bool same = slurp(ring.dir / "a" / "metrics.csv") == slurp(ring.dir / "b" / "metrics.csv");
  return {same, same ? "metrics logs byte-identical" : "metrics logs differ"};
}

Outcome checkpoint_resume() {
  if (ring.exit_a != 0) return {false, "no uninterrupted run"};
  const fs::path ck = ring.dir / "a" / "checkpoints" / "ckpt_0005.otck";
  if (!fs::exists(ck)) return {false, "missing " + ck.string()};
  const int code = run_cli("--deterministic train " + ring.config.string() + " --resume " + ck.string() +
                               " --out " + (ring.dir / "c").string(),
                           ring.dir / "c.log");
  if (code != 0) return {false, "resume exited with " + std::to_string(code)};
  const bool same_log = slurp(ring.dir / "a" / "metrics.csv") == slurp(ring.dir / "c" / "metrics.csv");
  const bool same_gen = slurp(ring.dir / "a" / "generator.otsg") == slurp(ring.dir / "c" / "generator.otsg");
  const auto a = checkpoint_load(ring.dir / "a" / "final.otck");
  const auto c = checkpoint_load(ring.dir / "c" / "final.otck");
  const bool same_diag = a.diagnostics == c.diagnostics;
  return {same_log && same_gen && same_diag, std::string("metrics ") + (same_log ? "identical" : "differ") +
                                                 ", diagnostics " + (same_diag ? "identical" : "differ") +
                                                 ", generator " + (same_gen ? "identical" : "differs")};
}

Outcome ablation() {
  const RunConfig c = load_run_config(kSource / "configs" / "ring.cfg");
  const LoadedData data = load_data(c.data);
  int wins = 0;
  std::string detail;
  for (int k = 0; k < 5; ++k) {
    const std::uint64_t seed = c.train.seed + static_cast<std::uint64_t>(k);
    const Generator g0 = make_initial_generator(c, static_cast<int>(data.train.dim()), seed, &data.train);
    const auto r = run_ablation(c, data.train, g0, seed);
    if (r.alternating_wd <= r.nonalternating_wd) ++wins;
    detail += fmt(r.alternating_wd) + " vs " + fmt(r.nonalternating_wd) + "; ";
    std::printf("  ablation seed %llu: alternating %s non-alternating %s (FIT steps %lld)\n",
                static_cast<unsigned long long>(seed), fmt(r.alternating_wd).c_str(),
                fmt(r.nonalternating_wd).c_str(), static_cast<long long>(r.fit_step_budget));
    std::fflush(stdout);
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds favour alternating: " + detail};
}

Outcome mnist(const fs::path& work) {
  const fs::path cfg = kSource / "configs" / "mnist.cfg";
  const RunConfig c = load_run_config(cfg);
  if (!fs::exists(c.data.path) || !fs::exists(c.data.test_path)) {
    return {false, "MNIST files missing under data/mnist (see tools/make_mnist_subset.py)"};
  }
  const int code = run_cli("--deterministic train " + cfg.string() + " --out " + work.string(),
                           work.parent_path() / "mnist.log");
  if (code != 0) return {false, "train exited with " + std::to_string(code)};
  const auto rows = read_metrics(work / "metrics.csv");
  double fin = 0.0, fin_se = 0.0;
  if (rows.size() != 5 || !final_cost(work.parent_path() / "mnist.log", fin, fin_se)) {
    return {false, "incomplete run"};
  }
  std::vector<double> wd;
  for (const auto& r : rows) wd.push_back(r.cost);
  wd.push_back(fin);
  bool strict = true;
  std::string trace;
  for (std::size_t i = 0; i < wd.size(); ++i) {
    trace += (i ? " " : "") + fmt(wd[i]);
    if (i > 0 && !(wd[i] < wd[i - 1])) strict = false;
  }

  const LoadedData data = load_data(c.data);
  const Generator g = load_mlp(work / "generator.otsg");
  const PushforwardSampler sampler(c.train.latent, &g);
  const auto tr = eval_wd(c.cost, sampler, data.train, wd_config(c), c.train.seed);
  const auto te = eval_wd(c.cost, sampler, *data.test, wd_config(c), c.train.seed);
  const double gap = std::abs(te.wd - tr.wd) / tr.wd;
  return {strict && gap <= 0.25, "WD by iteration " + trace + "; train " + fmt(tr.wd) + " test " + fmt(te.wd) +
                                     " gap " + fmt(gap)};
}

Outcome psi_network() {
  if (ring.exit_a != 0) return {false, "no training run"};
  const RunConfig c = load_run_config(kSource / "configs" / "ring.cfg");
  const LoadedData data = load_data(c.data);
  const auto ck = checkpoint_load(ring.dir / "a" / "final.otck");
  const auto r = verify_psi(data.train, ck.psi, nullptr, c.psi, c.train.seed);
  return {r.smoothed_non_increasing && r.correlation >= 0.99,
          "correlation " + fmt(r.correlation) + ", smoothed loss " +
              (r.smoothed_non_increasing ? "non-increasing" : "rises") + ", train mse " + fmt(r.train_mse)};
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  const fs::path work = fs::temp_directory_path() / "otfit_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  std::printf("work directory %s\n", work.string().c_str());

  criterion(1, "analytic 1D optimum", 60, analytic_1d);
  criterion(2, "oracle agreement", 120, oracle_agreement);
  criterion(3, "weak duality", 0, weak_duality);
  criterion(4, "convexity in psi", 10, convexity);
  criterion(5, "gradient correctness", 10, gradients);

  if (wanted(6) || wanted(7) || wanted(9) || wanted(10) || wanted(12)) prepare_ring(work / "ring");
  criterion(6, "contraction", 0, contraction);
  criterion(7, "pushforward uniformity", 0, uniformity);
  criterion(9, "determinism", 600, determinism);
  criterion(10, "checkpoint round-trip", 0, checkpoint_resume);
  if (wanted(6) && ring.exit_a == 0) {
    std::printf("  contraction ratios:");
    for (const auto& r : read_metrics(work / "ring" / "a" / "metrics.csv")) {
      std::printf(" %s", r.ratio.empty() ? "-" : fmt(std::stod(r.ratio)).c_str());
    }
    std::printf("\n");
  }
  criterion(12, "psi network", 300, psi_network);
  criterion(8, "ablation", 1200, ablation);
  criterion(11, "MNIST subset", 1800, [&] { return mnist(work / "mnist"); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
