#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jscc/config.hpp"
#include "jscc/error.hpp"
#include "jscc/experiments.hpp"

using namespace jscc;
namespace fs = std::filesystem;

namespace {

config::ExperimentSpec small_spec() {
  return config::parse(
      "dataset = synthetic-subspace\n"
      "train_count = 120\n"
      "test_count = 30\n"
      "batch_size = 30\n"
      "epochs = 2\n"
      "learning_rate = 0.001\n"
      "track_accuracy = false\n"
      "snr_grid = 0,10\n"
      "seeds = 0,1\n");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh(const std::string& name) {
  auto dir = fs::temp_directory_path() / "jscc_experiments_test" / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Experiments, KindNames) {
  for (auto k : {experiments::Kind::train, experiments::Kind::eval, experiments::Kind::sweep,
                 experiments::Kind::corrupt_study, experiments::Kind::sscc_compare}) {
    EXPECT_EQ(experiments::parse_kind(experiments::to_string(k)), k);
  }
  EXPECT_THROW(experiments::parse_kind("dance"), ConfigError);
}

TEST(Experiments, CsvLineFormatsNan) {
  experiments::ResultRow row{"sscc", 3.0, "awgn", 20.5, 0.9, 0.75, std::numeric_limits<double>::quiet_NaN(), 2};
  const auto line = experiments::csv_line(row);
  EXPECT_EQ(line.substr(0, 5), "sscc,");
  EXPECT_NE(line.find(",nan,2"), std::string::npos);
}

TEST(Experiments, SweepWritesOneRowPerSnrAndSeedAndIsReproducible) {
  const auto spec = small_spec();
  const auto a = fresh("sweep_a"), b = fresh("sweep_b");
  experiments::run(experiments::Kind::sweep, spec, a);
  experiments::run(experiments::Kind::sweep, spec, b);
  const auto csv = slurp(a / "results.csv");
  std::istringstream lines(csv);
  std::string header, line;
  std::getline(lines, header);
  EXPECT_EQ(header, experiments::kResultsHeader);
  std::size_t rows = 0;
  while (std::getline(lines, line)) rows += !line.empty();
  EXPECT_EQ(rows, spec.snr_grid.size() * spec.seeds.size());
  EXPECT_EQ(csv, slurp(b / "results.csv"));
  EXPECT_TRUE(fs::exists(a / "config.cfg"));
  EXPECT_TRUE(fs::exists(a / "run.log"));
  EXPECT_TRUE(fs::exists(a / "psnr_vs_snr.svg"));
  EXPECT_TRUE(fs::exists(a / "checkpoints" / "seed1.jsck"));
}

TEST(Experiments, TrainThenEvalUsesCheckpoint) {
  auto spec = small_spec();
  spec.seeds = {0};
  const auto out = fresh("train_eval");
  experiments::run(experiments::Kind::train, spec, out / "train");
  spec.checkpoint = out / "train" / "checkpoints" / "seed0.jsck";
  experiments::run(experiments::Kind::eval, spec, out / "eval");
  EXPECT_NE(slurp(out / "eval" / "results.csv").find("jscc,10"), std::string::npos);

  spec.network.feature_dim = 20;
  EXPECT_THROW(experiments::run(experiments::Kind::eval, spec, out / "mismatch"), CheckpointError);
}

TEST(Experiments, FailureIsLoggedAndRethrown) {
  auto spec = small_spec();
  const auto out = fresh("failure");
  spec.checkpoint = out / "does-not-exist.jsck";
  EXPECT_THROW(experiments::run(experiments::Kind::eval, spec, out), Error);
  ASSERT_TRUE(fs::exists(out / "run.log"));
  EXPECT_FALSE(slurp(out / "run.log").empty());
  EXPECT_TRUE(fs::exists(out / "config.cfg"));
}
