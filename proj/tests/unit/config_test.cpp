#include <gtest/gtest.h>

#include <algorithm>

#include "jscc/config.hpp"
#include "jscc/error.hpp"

using namespace jscc;

namespace {

std::vector<std::string> problems_of(std::string_view text) {
  try {
    config::parse(text);
  } catch (const ValidationError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, std::string_view key) {
  return std::any_of(problems.begin(), problems.end(), [&](const std::string& p) { return p.find(key) != std::string::npos; });
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const auto s = config::parse("");
  EXPECT_EQ(s.train.rate.eps_sq, 0.5);
  EXPECT_EQ(s.train.adam.learning_rate, 1.5e-4);
  EXPECT_EQ(s.train.rate.beta, 1.0);
  EXPECT_EQ(s.gate.threshold, 0.5);
  EXPECT_EQ(s.gate.bins, 8u);
  EXPECT_EQ(s.train.channel.rician_k, 1.0);
  EXPECT_EQ(s.snr_grid.size(), 9u);
  EXPECT_NO_THROW(s.validate());
}

TEST(Config, InvalidValuesAreReported) {
  EXPECT_TRUE(mentions(problems_of("eps_sq = -1\n"), "eps_sq"));
  EXPECT_TRUE(mentions(problems_of("batch_size = 0\n"), "batch_size"));
  EXPECT_TRUE(mentions(problems_of("channel = underwater\n"), "channel"));
  EXPECT_TRUE(mentions(problems_of("learning_rate = fast\n"), "learning_rate"));
}

TEST(Config, UnknownAndRepeatedKeysAreAllListed) {
  const auto p = problems_of("colour = blue\nepochs = 3\nepochs = 4\nshape = round\n");
  EXPECT_TRUE(mentions(p, "colour: unknown key"));
  EXPECT_TRUE(mentions(p, "shape: unknown key"));
  EXPECT_TRUE(mentions(p, "epochs: given more than once"));
}

TEST(Config, GridSyntax) {
  const auto g = config::parse_grid("-3:3:21");
  ASSERT_EQ(g.size(), 9u);
  EXPECT_EQ(g.front(), -3.0);
  EXPECT_EQ(g.back(), 21.0);
  EXPECT_EQ(config::parse_grid("\xE2\x88\x92" "3:3:21"), g);
  EXPECT_EQ(config::parse_grid("0, 0.1,0.5"), (std::vector<double>{0.0, 0.1, 0.5}));
  EXPECT_EQ(config::parse_grid("7"), (std::vector<double>{7.0}));
  EXPECT_THROW(config::parse_grid("1:0:3"), Error);
  EXPECT_TRUE(config::parse_grid("").empty());
  config::ExperimentSpec spec;
  spec.snr_grid.clear();
  try {
    spec.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(mentions(e.problems(), "snr_grid"));
  }
}

TEST(Config, SnapshotRoundTrips) {
  auto s = config::parse("epochs = 3\nsnr_grid = 0,5\nchannel = rician\nrician_k = 4\ngated = true\nseeds = 1,2\n");
  EXPECT_EQ(s.train.epochs, 3u);
  EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{1, 2}));
  const auto text = s.snapshot();
  EXPECT_EQ(config::parse(text).snapshot(), text);
}

TEST(Config, ArchitectureIgnoresTrainingKeys) {
  const auto a = config::parse("epochs = 3\n"), b = config::parse("epochs = 30\nlearning_rate = 0.01\n");
  EXPECT_EQ(a.architecture(), b.architecture());
  EXPECT_NE(a.architecture(), config::parse("feature_dim = 20\n").architecture());
}

TEST(Config, ModelPresetSetsNetworkShape) {
  const auto s = config::parse("model = conv-mnist\ndataset = mnist\n");
  EXPECT_EQ(s.network.feature_dim, 648u);
  EXPECT_TRUE(mentions(problems_of("model = resnet\n"), "model"));
}
