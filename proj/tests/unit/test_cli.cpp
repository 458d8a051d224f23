#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "otfit/trainer.hpp"
#include "test_util.hpp"

namespace otfit {
namespace {

namespace fs = std::filesystem;

const char* kTinyRing = R"([cost]
metric = l2
p = 2
[data]
kind = ring
n_points = 20
[latent]
kind = uniform
dim = 2
[net]
hidden = 8
[ots]
max_steps = 500
[eval]
samples = 500
[fit]
max_steps = 50
[train]
seed = 4
)";

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(OTFIT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TEST(Cli, MalformedConfigExitsWithConfigCode) {
  const auto dir = testing::scratch_dir("cli_bad");
  std::ofstream(dir / "bad.cfg") << "[train]\nalpha = 0.2\nalpha 0.3\n";
  EXPECT_EQ(run_cli("train " + (dir / "bad.cfg").string() + " --out " + (dir / "out").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("line 3"), std::string::npos) << slurp(dir / "log");
  EXPECT_EQ(run_cli("train " + (dir / "missing.cfg").string(), dir / "log"), 2);
  EXPECT_EQ(run_cli("train", dir / "log"), 2);
}

TEST(Cli, MissingDatasetExitsWithConfigCode) {
  const auto dir = testing::scratch_dir("cli_nodata");
  std::ofstream(dir / "run.cfg") << "[data]\nkind = csv\npath = nothing_here.csv\n";
  EXPECT_EQ(run_cli("train " + (dir / "run.cfg").string() + " --out " + (dir / "out").string(), dir / "log"), 2);
}

TEST(Cli, ZeroIterationsWritesHeaderOnly) {
  const auto dir = testing::scratch_dir("cli_zero");
  std::ofstream(dir / "run.cfg") << kTinyRing;
  ASSERT_EQ(run_cli("--deterministic train " + (dir / "run.cfg").string() + " --iterations 0 --out " +
                        (dir / "out").string(),
                    dir / "log"),
            0)
      << slurp(dir / "log");
  EXPECT_EQ(slurp(dir / "out" / "metrics.csv"), metrics_header() + "\n");
  EXPECT_TRUE(fs::exists(dir / "out" / "generator.otsg"));
  EXPECT_TRUE(fs::exists(dir / "out" / "resolved.cfg"));
}

TEST(Cli, TrainEvalAndExport) {
  const auto dir = testing::scratch_dir("cli_train");
  std::ofstream(dir / "run.cfg") << kTinyRing;
  const auto cfg = (dir / "run.cfg").string();
  const auto out = dir / "out";
  ASSERT_EQ(run_cli("--deterministic train " + cfg + " --iterations 1 --out " + out.string(), dir / "log"), 0)
      << slurp(dir / "log");
  const std::string metrics = slurp(out / "metrics.csv");
  EXPECT_EQ(metrics.rfind(metrics_header() + "\n0,", 0), 0u) << metrics;

  EXPECT_EQ(run_cli("eval-wd " + (out / "generator.otsg").string() + " --config " + cfg, dir / "eval.log"), 0)
      << slurp(dir / "eval.log");
  EXPECT_EQ(run_cli("eval-wd " + (dir / "nope.otsg").string() + " --config " + cfg, dir / "eval.log"), 3);

  ASSERT_EQ(run_cli("export " + (out / "metrics.csv").string() + " --out " + (dir / "plots").string(),
                    dir / "export.log"),
            0)
      << slurp(dir / "export.log");
  bool svg = false;
  for (const auto& e : fs::directory_iterator(dir / "plots")) svg = svg || e.path().extension() == ".svg";
  EXPECT_TRUE(svg);
}

TEST(Cli, CheckpointsAndResume) {
  const auto dir = testing::scratch_dir("cli_resume");
  std::ofstream(dir / "run.cfg") << kTinyRing << "checkpoint_every = 1\n";
  const auto cfg = (dir / "run.cfg").string();
  ASSERT_EQ(run_cli("--deterministic train " + cfg + " --iterations 2 --out " + (dir / "a").string(), dir / "a.log"),
            0)
      << slurp(dir / "a.log");
  const auto ck = dir / "a" / "checkpoints" / "ckpt_0001.otck";
  ASSERT_TRUE(fs::exists(ck));
  EXPECT_TRUE(fs::exists(dir / "a" / "checkpoints" / "ckpt_0002.otck"));
  ASSERT_EQ(run_cli("--deterministic train " + cfg + " --iterations 2 --resume " + ck.string() + " --out " +
                        (dir / "b").string(),
                    dir / "b.log"),
            0)
      << slurp(dir / "b.log");
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "generator.otsg"), slurp(dir / "b" / "generator.otsg"));
  EXPECT_EQ(run_cli("--seed 9 train " + cfg + " --resume " + ck.string() + " --out " + (dir / "c").string(),
                    dir / "c.log"),
            3);
}

}  // namespace
}  // namespace otfit
