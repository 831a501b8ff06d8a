#include <gtest/gtest.h>

#include <cstdlib>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "support/tempdir.hpp"

using testing_support::slurp;
using testing_support::snapshot;
using testing_support::spit;
using testing_support::TempDir;

namespace {

// Runs lockerctl in `dir`; stdout and stderr go to dir/stdout.txt, dir/stderr.txt.
int lockerctl(const TempDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" LOCKERCTL_PATH "' " + args +
                          " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kFastForests = R"({"forecast_forest": {"trees": 15}, "dwell": {"trees": 15, "folds": 2}})";

}  // namespace

TEST(Cli, UsageErrorsAreConfigErrors) {
  TempDir dir("cli-usage");
  EXPECT_EQ(lockerctl(dir, ""), 2);
  EXPECT_EQ(lockerctl(dir, "frobnicate"), 2);
  EXPECT_EQ(lockerctl(dir, "--help"), 0);
}

TEST(Cli, MissingInputsExitWithConfigCode) {
  TempDir dir("cli-missing");
  EXPECT_EQ(lockerctl(dir, "plan --lockers nowhere.json"), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("nowhere.json"), std::string::npos);
  spit(dir / "p.json", R"({"horizon": 9})");
  EXPECT_EQ(lockerctl(dir, "plan --config p.json"), 2);
}

TEST(Cli, IngestRejectsBadRecordsUnlessAskedToSkip) {
  TempDir dir("cli-ingest");
  spit(dir / "raw.csv",
       "locker_id,order_id,kind,ship_option,day,seq\n"
       "A,o1,Request,1,0,100\n"
       "A,o1,Delivery,1,1,30000\n"
       "A,o2,Request,1,0,200\n"
       "A,o2,Pickup,1,1,20000\n"
       "A,o2,Delivery,1,2,30000\n");
  EXPECT_EQ(lockerctl(dir, "ingest raw.csv -o clean.csv"), 3);
  EXPECT_NE(slurp(dir / "stderr.txt").find("o2"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "clean.csv"));
  EXPECT_EQ(lockerctl(dir, "ingest raw.csv -o clean.csv --skip-bad"), 0);
  EXPECT_NE(slurp(dir / "clean.csv").find("A,o1,Delivery,1,1,30000"), std::string::npos);
}

TEST(Cli, BenchTwiceIsByteIdentical) {
  TempDir dir("cli-bench");
  ASSERT_EQ(lockerctl(dir, "bench --seed 1 --lockers 3 -o a"), 0);
  ASSERT_EQ(lockerctl(dir, "bench --seed 1 --lockers 3 -o b"), 0);
  EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));
  ASSERT_EQ(lockerctl(dir, "bench --seed 2 --lockers 3 -o c"), 0);
  EXPECT_NE(snapshot(dir / "a"), snapshot(dir / "c"));
}

TEST(Cli, TrainPlanSimulateReport) {
  TempDir dir("cli-run");
  ASSERT_EQ(lockerctl(dir, "bench --seed 1 --lockers 3 -o data"), 0);
  // The benchmark's own config with smaller forests.
  auto cfg = nlohmann::json::parse(slurp(dir / "data" / "pipeline.json"));
  cfg.merge_patch(nlohmann::json::parse(kFastForests));
  spit(dir / "data" / "fast.json", cfg.dump(2));
  ASSERT_EQ(lockerctl(dir, "train --config data/fast.json"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "models"));
  ASSERT_EQ(lockerctl(dir, "plan --config data/fast.json --use-models"), 0);
  const auto plans = snapshot(dir / "data" / "out");
  EXPECT_EQ(plans.count("metrics.csv"), 1u);
  ASSERT_EQ(lockerctl(dir, "simulate --config data/fast.json --use-models"), 0);
  const auto first = snapshot(dir / "data" / "out");
  for (const char* f : {"summary.csv", "uplift.csv", "occupancy.csv", "pipeline_used.json"}) {
    EXPECT_EQ(first.count(f), 1u) << f;
  }
  ASSERT_EQ(lockerctl(dir, "simulate --config data/fast.json --use-models --serial"), 0);
  EXPECT_EQ(snapshot(dir / "data" / "out"), first);
  ASSERT_EQ(lockerctl(dir, "report data/out"), 0);
  EXPECT_NE(slurp(dir / "stdout.txt").find("all"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "out" / "report.json"));
}
