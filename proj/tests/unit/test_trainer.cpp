#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "otfit/config.hpp"
#include "otfit/error.hpp"
#include "otfit/experiments.hpp"
#include "otfit/oracle.hpp"
#include "otfit/trainer.hpp"
#include "test_util.hpp"

namespace otfit {
namespace {

using testing::layer;

const CostSpec kL1{Metric::L1, 1.0};

const char* kSmallRing = R"(
[cost]
metric = l2
p = 2
[data]
kind = ring
n_points = 40
seed = 3
[latent]
kind = uniform
dim = 2
low = -1
high = 1
[net]
hidden = 16,16
prefit = line
prefit_steps = 500
[ots]
learning_rate = 0.05
batch_size = 32
max_steps = 3000
lr_schedule = halve_on_stall
averaging = true
snapshot_check = true
[eval]
samples = 4000
[fit]
batch_size = 32
learning_rate = 0.003
optimizer = adam
max_steps = 400
[train]
outer_iterations = 3
seed = 5
)";

struct SmallRun {
  RunConfig config;
  LoadedData data;
  Generator g0;

  SmallRun() : config(parse_run_config(kSmallRing)), data(load_data(config.data)) {
    g0 = make_initial_generator(config, 2, config.train.seed, &data.train);
    config.train.record_wall_time = false;
  }
};

TEST(TrainConfig, AlphaSetsFitFraction) {
  TrainConfig c;
  double prev = 1.0;
  for (double alpha : {0.01, 0.1, 0.25, 0.4, 0.49}) {
    c.alpha = alpha;
    EXPECT_NO_THROW(c.validate());
    EXPECT_DOUBLE_EQ(c.fit_target_fraction(), 1.0 - 2.0 * alpha);
    EXPECT_LT(c.fit_target_fraction(), prev);
    prev = c.fit_target_fraction();
  }
  for (double alpha : {0.0, 0.5, -0.1, 0.75}) {
    c.alpha = alpha;
    EXPECT_THROW(c.validate(), InvalidInput);
  }
}

TEST(Train, ZeroIterationsReturnsInitialGenerator) {
  SmallRun run;
  run.config.train.outer_iterations = 0;
  run.config.train.final_evaluation = false;
  const auto r = train(run.config.train, run.data.train, run.config.cost, run.g0);
  EXPECT_EQ(r.generator, run.g0);
  EXPECT_TRUE(r.diagnostics.empty());
}

TEST(Train, CheckpointingNeedsDirectory) {
  SmallRun run;
  run.config.train.checkpoint_every = 1;
  EXPECT_NO_THROW(run.config.train.validate());
  EXPECT_THROW(train(run.config.train, run.data.train, run.config.cost, run.g0), InvalidInput);
}

TEST(Train, RejectsDimensionMismatch) {
  SmallRun run;
  Rng rng = make_rng(1);
  const std::vector<int> widths{2, 4, 3};
  EXPECT_THROW(train(run.config.train, run.data.train, run.config.cost, Mlp::xavier(widths, rng)), InvalidInput);
}

TEST(EpsOt2, Examples) {
  const Dataset ys = testing::points_1d({0.0, 1.0, 3.0, 4.5});
  EXPECT_NEAR(eps_ot2_from_histogram(kL1, ys, std::vector<std::uint64_t>{5, 5, 5, 5}), 0.0, 1e-12);
  // everything lands on y_0: 3/4 of the mass moves to the others
  const double one_hot = (1.0 + 3.0 + 4.5) / 4.0;
  EXPECT_NEAR(eps_ot2_from_histogram(kL1, ys, std::vector<std::uint64_t>{8, 0, 0, 0}), one_hot, 1e-12);
  const CostSpec sq{Metric::L2, 2.0};
  EXPECT_NEAR(eps_ot2_from_histogram(sq, ys, std::vector<std::uint64_t>{8, 0, 0, 0}),
              std::sqrt((1.0 + 9.0 + 20.25) / 4.0), 1e-12);
  EXPECT_EQ(eps_ot2_from_histogram(kL1, testing::points_1d({2.0}), std::vector<std::uint64_t>{7}), 0.0);
  EXPECT_THROW(eps_ot2_from_histogram(kL1, ys, std::vector<std::uint64_t>{1, 2}), InvalidInput);
}

TEST(EpsOt2, CollapsedGeneratorMatchesOneHot) {
  const Dataset ys = testing::points_1d({0.0, 1.0, 3.0, 4.5, -2.0});
  const Mlp constant({layer(1, 1, {0.0f}, {0.2f})});
  const PushforwardSampler mu(LatentSource::uniform_box(1, 0.0, 1.0), &constant);
  const MongeMap map(kL1, ys, std::vector<double>(5, 0.0));
  Rng rng = make_rng(81);
  const double got = estimate_eps_ot2(map, mu, ys, 500, rng);
  EXPECT_NEAR(got, (1.0 + 3.0 + 4.5 + 2.0) / 5.0, 1e-12);
  const auto oracle = exact_ot_cost(kL1, DiscreteMeasure{PointSet(1, std::vector<double>{0.0}), {1.0}},
                                    DiscreteMeasure::uniform(ys.points()));
  EXPECT_NEAR(got, oracle.cost, 1e-12);
}

TEST(EpsOt2, ConvergedIsSmall) {
  const Dataset ys = testing::points_1d({0.0, 1.0});
  const PushforwardSampler mu(LatentSource::uniform_box(1, 0.0, 1.0));
  const MongeMap map(kL1, ys, {0.0, 0.0});
  Rng rng = make_rng(82);
  // |fraction - 1/2| moves distance 1; its standard deviation is 1/(2 sqrt(M)).
  EXPECT_LE(estimate_eps_ot2(map, mu, ys, 40000, rng), 4.0 * 0.5 / 200.0);
}

IterationDiagnostics sample_row(std::int64_t i) {
  IterationDiagnostics d;
  d.iter = i;
  d.cost_estimate = 1.0 / 3.0 + static_cast<double>(i);
  d.cost_stderr = 1e-3;
  d.eps_fit = 0.125;
  d.ots_steps = 100 + i;
  d.fit_steps = 7;
  d.ots_stop = StopReason::HistogramUniform;
  d.fit_stop = FitStop::TargetReached;
  d.fit_initial_loss = 0.5;
  if (i > 0) d.contraction_ratio = 0.9;
  if (i % 2 == 0) d.eps_ot2 = 0.01;
  d.histogram_tv = 0.02;
  return d;
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = testing::scratch_dir("ckpt");
  Rng rng = make_rng(83);
  const std::vector<int> widths{2, 5, 2};
  Checkpoint ck;
  ck.generator = Mlp::xavier(widths, rng);
  ck.generator.set_version(17);
  ck.psi = {0.25, -1.5, 3.0};
  ck.next_iteration = 2;
  ck.seed = 99;
  ck.config_hash = 0xdeadbeefcafef00dULL;
  ck.diagnostics = {sample_row(0), sample_row(1)};
  const auto path = checkpoint_path(dir, 2);
  EXPECT_EQ(path.filename(), "ckpt_0002.otck");
  checkpoint_save(path, ck);
  const Checkpoint back = checkpoint_load(path);
  EXPECT_EQ(back.generator, ck.generator);
  EXPECT_EQ(back.generator.version(), 17u);
  EXPECT_EQ(back.psi, ck.psi);
  EXPECT_EQ(back.next_iteration, 2u);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  EXPECT_EQ(back.diagnostics, ck.diagnostics);

  // psi is stored as float32
  ck.psi = {0.1};
  checkpoint_save(path, ck);
  EXPECT_EQ(checkpoint_load(path).psi[0], static_cast<double>(0.1f));
}

TEST(Checkpoint, LoadErrors) {
  const auto dir = testing::scratch_dir("ckpt_err");
  Rng rng = make_rng(84);
  const std::vector<int> widths{2, 3, 2};
  Checkpoint ck;
  ck.generator = Mlp::xavier(widths, rng);
  ck.psi = {1.0, 2.0};
  ck.diagnostics = {sample_row(0)};
  ck.next_iteration = 1;
  checkpoint_save(dir / "good.otck", ck);
  std::string bytes;
  {
    std::ifstream is(dir / "good.otck", std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    bytes = ss.str();
  }
  auto kind_of = [&](const std::string& data) {
    std::ofstream(dir / "bad.otck", std::ios::binary) << data;
    try {
      checkpoint_load(dir / "bad.otck");
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no FormatError";
    return FormatErrorKind::Io;
  };
  std::string magic = bytes;
  magic[1] = 'X';
  EXPECT_EQ(kind_of(magic), FormatErrorKind::BadMagic);
  std::string version = bytes;
  version[4] = 7;
  EXPECT_EQ(kind_of(version), FormatErrorKind::VersionMismatch);
  EXPECT_EQ(kind_of(bytes.substr(0, bytes.size() - 1)), FormatErrorKind::Truncated);
  EXPECT_EQ(kind_of(bytes.substr(0, 30)), FormatErrorKind::Truncated);
  EXPECT_EQ(kind_of(bytes + "x"), FormatErrorKind::Malformed);
  EXPECT_THROW(checkpoint_load(dir / "missing.otck"), FormatError);
}

TEST(Metrics, Format) {
  EXPECT_EQ(metrics_header(),
            "iter,cost_estimate,eps_ot2,eps_fit,contraction_ratio,wall_ms,cost_stderr,histogram_tv,ots_steps,"
            "fit_steps");
  IterationDiagnostics d;
  d.iter = 0;
  d.cost_estimate = 0.5;
  d.eps_fit = 0.25;
  d.ots_steps = 10;
  d.fit_steps = 3;
  EXPECT_EQ(metrics_row(d), "0,0.5,,0.25,,0,0,,10,3");
  d.eps_ot2 = 0.125;
  d.contraction_ratio = 0.75;
  d.histogram_tv = 0.0625;
  EXPECT_EQ(metrics_row(d), "0,0.5,0.125,0.25,0.75,0,0,0.0625,10,3");

  const auto dir = testing::scratch_dir("metrics");
  write_metrics(dir / "m.csv", std::vector<IterationDiagnostics>{d});
  std::ifstream is(dir / "m.csv");
  std::string header, row, extra;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, metrics_header());
  EXPECT_EQ(row, metrics_row(d));
  EXPECT_FALSE(std::getline(is, extra));
}

TEST(Train, SmallRingDecreasesAndIsDeterministic) {
  SmallRun run;
  const auto a = train(run.config.train, run.data.train, run.config.cost, run.g0);
  ASSERT_EQ(a.diagnostics.size(), 3u);
  ASSERT_TRUE(a.final_cost.has_value());
  for (const auto& d : a.diagnostics) {
    EXPECT_TRUE(std::isfinite(d.cost_estimate));
    EXPECT_GE(d.cost_estimate, 0.0);
    EXPECT_GE(d.eps_fit, 0.0);
    EXPECT_EQ(d.wall_ms, 0.0);
    EXPECT_EQ(d.contraction_ratio.has_value(), d.iter > 0);
    ASSERT_TRUE(d.eps_ot2.has_value());
    EXPECT_GE(*d.eps_ot2, 0.0);
  }
  // post-FIT transport cost is below the pre-FIT cost
  EXPECT_LT(a.diagnostics[1].cost_estimate, a.diagnostics[0].cost_estimate);
  EXPECT_LT(a.final_cost->mean, a.diagnostics[0].cost_estimate);

  const auto b = train(run.config.train, run.data.train, run.config.cost, run.g0);
  EXPECT_EQ(a.diagnostics, b.diagnostics);
  EXPECT_EQ(a.generator, b.generator);
  EXPECT_EQ(a.final_cost->mean, b.final_cost->mean);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  SmallRun run;
  const auto dir = testing::scratch_dir("resume");
  TrainConfig c = run.config.train;
  c.checkpoint_every = 1;
  c.checkpoint_dir = dir;
  c.metrics_path = dir / "metrics.csv";
  const auto full = train(c, run.data.train, run.config.cost, run.g0);

  const Checkpoint ck = checkpoint_load(checkpoint_path(dir, 1));
  EXPECT_EQ(ck.next_iteration, 1u);
  TrainConfig rc = c;
  rc.checkpoint_dir = dir / "resumed";
  rc.metrics_path = dir / "resumed.csv";
  std::filesystem::create_directories(rc.checkpoint_dir);
  const auto resumed = resume(rc, run.data.train, run.config.cost, ck);
  EXPECT_EQ(resumed.diagnostics, full.diagnostics);
  EXPECT_EQ(resumed.generator, full.generator);
  EXPECT_EQ(resumed.final_cost->mean, full.final_cost->mean);

  std::ifstream m1(c.metrics_path), m2(rc.metrics_path);
  std::stringstream s1, s2;
  s1 << m1.rdbuf();
  s2 << m2.rdbuf();
  EXPECT_EQ(s1.str(), s2.str());

  TrainConfig other = rc;
  other.seed = 6;
  EXPECT_THROW(resume(other, run.data.train, run.config.cost, ck), InvalidInput);
  other = rc;
  other.ots.learning_rate = 0.07;
  EXPECT_THROW(resume(other, run.data.train, run.config.cost, ck), InvalidInput);
}

}  // namespace
}  // namespace otfit
