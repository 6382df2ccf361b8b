#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "uwbsense/checkpoint.hpp"
#include "uwbsense/eval.hpp"
#include "uwbsense/preprocess.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / ("uwbsense_cli_" + std::to_string(::getpid()));

int run(const std::string& args) {
  const std::string cmd = std::string(UWBSENSE_CLI_PATH) + " " + args + " --quiet 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dir(const std::string& name) { return (kRoot / name).string(); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::create_directories(kRoot);
    ASSERT_EQ(run("simulate --duration 20 --seed 5 --out " + dir("sim")), 0);
    ASSERT_EQ(run("preprocess --input " + dir("sim") + " --task localization --out " + dir("pre")), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, SimulateWritesCaptureTruthAndManifest) {
  for (auto f : {"capture.uwbc", "truth.csv", "summary.txt", "manifest.txt", "config.cfg"})
    EXPECT_TRUE(fs::exists(kRoot / "sim" / f)) << f;
  const auto cap = uwbsense::capture_read(dir("sim") + "/capture.uwbc");
  // About 12 records per 8 ms cycle minus collisions.
  EXPECT_GT(cap.records.size(), 20000u * 20 / 60);
  const auto manifest = uwbsense::KvConfig::load(dir("sim") + "/manifest.txt");
  EXPECT_EQ(manifest.get_string("command", ""), "simulate");
  EXPECT_EQ(manifest.get_u64("seed", 0), 5u);
  EXPECT_TRUE(manifest.has("output.capture.fnv1a64"));
}

TEST_F(Cli, SameSeedSameCaptureBytes) {
  ASSERT_EQ(run("simulate --duration 20 --seed 5 --out " + dir("sim2")), 0);
  EXPECT_EQ(slurp(kRoot / "sim" / "capture.uwbc"), slurp(kRoot / "sim2" / "capture.uwbc"));
  EXPECT_EQ(slurp(kRoot / "sim" / "truth.csv"), slurp(kRoot / "sim2" / "truth.csv"));
}

TEST_F(Cli, SeedFromEnvironmentAndFlagPrecedence) {
  ASSERT_EQ(::setenv("UWBSENSE_SEED", "5", 1), 0);
  ASSERT_EQ(run("simulate --duration 20 --out " + dir("env")), 0);
  ::unsetenv("UWBSENSE_SEED");
  EXPECT_EQ(slurp(kRoot / "sim" / "capture.uwbc"), slurp(kRoot / "env" / "capture.uwbc"));
  ASSERT_EQ(run("simulate --duration 2 --seed 6 --set seed=5 --out " + dir("flag")), 0);
  EXPECT_EQ(uwbsense::KvConfig::load(dir("flag") + "/manifest.txt").get_u64("seed", 0), 6u);
}

TEST_F(Cli, ConfigFileAndOverrides) {
  {
    std::ofstream cfg(kRoot / "small.cfg");
    cfg << "# tiny room\nroom_width = 4\nroom_length = 4\nanchor.0.x = 0.5\nanchor.0.y = 0.5\n"
           "anchor.1.x = 3.5\nanchor.1.y = 0.5\nanchor.2.x = 2\nanchor.2.y = 3.5\n"
           "sim.duration_s = 3\n";
  }
  ASSERT_EQ(run("simulate --config " + (kRoot / "small.cfg").string() +
                " --set sim.duration_s=2 --seed 1 --out " + dir("small")),
            0);
  const auto eff = uwbsense::KvConfig::load(dir("small") + "/config.cfg");
  EXPECT_EQ(eff.get_double("sim.duration_s", 0), 2.0);
  EXPECT_EQ(eff.get_double("room_width", 0), 4.0);
  std::set<std::pair<int, int>> links;
  for (const auto& r : uwbsense::capture_read(dir("small") + "/capture.uwbc").records)
    links.insert({r.tx_id, r.rx_id});
  EXPECT_EQ(links.size(), 6u);
}

TEST_F(Cli, PreprocessShapeAndCount) {
  const auto f = uwbsense::read_datapoints(dir("pre") + "/datapoints.uwbd");
  EXPECT_EQ(f.header.links, 12);
  EXPECT_EQ(f.header.c, 4);
  EXPECT_EQ(f.header.length, 500);
  // Hop grid from 1 s to 20 s in 0.5 s steps.
  EXPECT_GE(f.points.size(), 34u);
  EXPECT_LE(f.points.size(), 39u);
  EXPECT_TRUE(fs::exists(kRoot / "pre" / "manifest.txt"));
}

TEST_F(Cli, TrainEvalFinetuneEndToEnd) {
  const auto data = dir("pre") + "/datapoints.uwbd";
  ASSERT_EQ(run("train --data " + data + " --epochs 2 --seed 3 --deterministic --out " + dir("train")), 0);
  const auto history = slurp(kRoot / "train" / "history.csv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "epoch,train_loss,val_loss,val_metric");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
  ASSERT_EQ(run("eval --data " + data + " --model " + dir("train") + "/model.uwbm --out " + dir("eval")), 0);
  for (auto f : {"metrics.csv", "cdf.csv", "trajectory.csv", "predictions.csv", "manifest.txt"})
    EXPECT_TRUE(fs::exists(kRoot / "eval" / f)) << f;
  const auto traj = slurp(kRoot / "eval" / "trajectory.csv");
  EXPECT_EQ(traj.substr(0, traj.find('\n')), "t,x_true,y_true,x_pred,y_pred,x_smooth,y_smooth");

  // Zero-epoch fine-tuning reproduces the checkpoint byte for byte.
  ASSERT_EQ(run("finetune --model " + dir("train") + "/model.uwbm --data " + data +
                " --epochs 0 --out " + dir("ft0")),
            0);
  EXPECT_EQ(slurp(kRoot / "train" / "model.uwbm"), slurp(kRoot / "ft0" / "model.uwbm"));
  ASSERT_EQ(run("finetune --model " + dir("train") + "/model.uwbm --data " + data +
                " --minutes 0.2 --epochs 1 --out " + dir("ft1")),
            0);
  EXPECT_EQ(run("finetune --model " + dir("train") + "/model.uwbm --data " + data +
                " --epochs 51 --out " + dir("ft2")),
            2);
}

TEST_F(Cli, EvalOfPerfectPredictionsGivesAccuracyOne) {
  ASSERT_EQ(run("simulate --duration 6 --persons 2 --seed 2 --out " + dir("occ")), 0);
  ASSERT_EQ(run("preprocess --input " + dir("occ") + " --task occupancy --out " + dir("occ_pre")), 0);
  const auto f = uwbsense::read_datapoints(dir("occ_pre") + "/datapoints.uwbd");
  ASSERT_FALSE(f.points.empty());
  {
    std::ofstream out(kRoot / "perfect.csv");
    out << "t_end_us,class\n";
    for (const auto& p : f.points) out << p.t_end_us << "," << p.label.class_id << "\n";
  }
  ASSERT_EQ(run("eval --data " + dir("occ_pre") + "/datapoints.uwbd --predictions " +
                (kRoot / "perfect.csv").string() + " --out " + dir("occ_eval")),
            0);
  const auto metrics = slurp(kRoot / "occ_eval" / "metrics.csv");
  EXPECT_NE(metrics.find("\naccuracy,1,,,"), std::string::npos) << metrics;
  EXPECT_TRUE(fs::exists(kRoot / "occ_eval" / "confusion.csv"));
}

TEST_F(Cli, ErrorsMapToExitCodes) {
  EXPECT_EQ(run("simulate --duration 0 --out " + dir("bad")), 2);
  EXPECT_EQ(run("simulate --duration 5 --persons 9 --out " + dir("bad")), 2);
  EXPECT_EQ(run("simulate --set room_width=abc --out " + dir("bad")), 2);
  EXPECT_EQ(run("simulate --duration 5"), 2);  // no --out
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("preprocess --capture " + dir("sim") + "/capture.uwbc --truth " +
                dir("sim") + "/missing.csv --task localization --out " + dir("bad")),
            2);
  EXPECT_EQ(run("preprocess --input " + dir("sim") + " --task counting --out " + dir("bad")), 2);
  {
    std::ofstream junk(kRoot / "junk.uwbd");
    junk << "not a datapoint file";
  }
  EXPECT_EQ(run("train --data " + (kRoot / "junk.uwbd").string() + " --out " + dir("bad")), 2);
  // A non-finite learning rate makes training diverge: runtime error.
  EXPECT_EQ(run("train --data " + dir("pre") + "/datapoints.uwbd --epochs 1 --lr 1e300 --out " +
                dir("bad")),
            3);
}
