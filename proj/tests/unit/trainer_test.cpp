#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "jscc/channel.hpp"
#include "jscc/error.hpp"
#include "jscc/presets.hpp"
#include "jscc/trainer.hpp"

using namespace jscc;
using trainer::Discretization;

namespace {

const presets::Dataset& synthetic() {
  static const presets::Dataset ds = [] {
    presets::DatasetSpec spec;
    spec.name = "synthetic-subspace";
    spec.train_count = 300;
    spec.test_count = 60;
    return presets::load(spec);
  }();
  return ds;
}

trainer::TrainConfig quick(std::size_t epochs) {
  trainer::TrainConfig cfg;
  cfg.adam.learning_rate = 1e-3;
  cfg.batch_size = 30;
  cfg.epochs = epochs;
  cfg.track_accuracy = false;
  return cfg;
}

}  // namespace

TEST(Discretize, WorkedExamples) {
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(0.3, 0.0, 1.0, 4), 0.375);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(0.0, 0.0, 1.0, 4), 0.125);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(0.999, 0.0, 1.0, 4), 0.875);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(1.0, 0.0, 1.0, 4), 0.875);
}

TEST(Discretize, ErrorBoundAndMidpoints) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const double hi = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    const std::size_t k = 1 + rng() % 16;
    const double width = hi / static_cast<double>(k);
    for (int i = 0; i < 500; ++i) {
      const double s = hi * i / 499.0;
      const double t = trainer::discretize_sigma(s, 0.0, hi, k);
      EXPECT_LE(std::abs(t - s), width / 2 + 1e-12);
      const double bin = (t - width / 2) / width;
      EXPECT_NEAR(bin, std::round(bin), 1e-9);
    }
  }
}

TEST(Discretize, VerbatimIgnoresLowerEdgeCorrectedDoesNot) {
  // range [0.5, 1.5], k = 2: verbatim points are 0.25 + 0.5 * floor(2 s), capped at 0.75;
  // corrected points are the bin midpoints 0.75 and 1.25.
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(0.6, 0.5, 1.5, 2, Discretization::verbatim), 0.75);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(1.2, 0.5, 1.5, 2, Discretization::verbatim), 0.75);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(0.6, 0.5, 1.5, 2, Discretization::corrected), 0.75);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(0.9, 0.5, 1.5, 2, Discretization::corrected), 0.75);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(1.2, 0.5, 1.5, 2, Discretization::corrected), 1.25);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(1.5, 0.5, 1.5, 2, Discretization::corrected), 1.25);
}

TEST(Discretize, OutOfRangeIsClampedAndBadRangeRejected) {
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(-1.0, 0.0, 1.0, 4), 0.125);
  EXPECT_DOUBLE_EQ(trainer::discretize_sigma(7.0, 0.0, 1.0, 4), 0.875);
  EXPECT_THROW(trainer::discretize_sigma(0.5, 1.0, 1.0, 4), ConfigError);
  EXPECT_THROW(trainer::discretize_sigma(0.5, 0.0, 1.0, 0), ConfigError);
}

TEST(TrainConfig, Validation) {
  auto cfg = quick(1);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = quick(1);
  cfg.snr_min_db = 5;
  cfg.snr_max_db = 5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_DOUBLE_EQ(quick(1).sigma2_max(), channel::noise_power_from_snr(-3.0));
}

TEST(TrainJscc, ZeroEpochsLeaveParametersUnchanged) {
  auto sys = trainer::System::create({}, 0);
  const auto before = sys.store.snapshot();
  auto h = trainer::train_jscc(sys, synthetic().train, quick(0));
  EXPECT_TRUE(h.epochs.empty());
  EXPECT_EQ(sys.store.snapshot(), before);
}

TEST(TrainJscc, SmokeRunReducesLoss) {
  auto sys = trainer::System::create({}, 0);
  auto h = trainer::train_jscc(sys, synthetic().train, quick(20));  // 10 steps per epoch
  ASSERT_EQ(h.epochs.size(), 20u);
  EXPECT_LT(h.epochs.back().loss, h.epochs.front().loss);
}

TEST(TrainJscc, IdenticalSeedsGiveIdenticalHistories) {
  auto run = [] {
    auto sys = trainer::System::create({}, 4);
    auto cfg = quick(3);
    cfg.seed = 4;
    cfg.channel.model = channel::Model::rayleigh;
    auto h = trainer::train_jscc(sys, synthetic().train, cfg);
    return std::make_pair(h.csv(), sys.store.snapshot());
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainGated, SingleBinAndNonnegativeWeights) {
  models::GateConfig gate;
  auto cfg = quick(2);
  gate.bins = 1;
  gate.sigma2_min = cfg.sigma2_min();
  gate.sigma2_max = cfg.sigma2_max();
  auto sys = trainer::System::create({}, 1, &gate);
  auto h = trainer::train_gated(sys, synthetic().train, cfg);
  EXPECT_EQ(h.epochs.size(), 2u);
  for (const auto& layer : sys.gate->layers()) {
    for (double w : layer.weight.value()) EXPECT_GE(w, 0.0);
  }
  for (const auto& e : h.epochs) {
    EXPECT_GT(e.activated_ratio, 0.0);
    EXPECT_LE(e.activated_ratio, 1.0);
  }
}

TEST(TrainGated, RequiresGate) {
  auto sys = trainer::System::create({}, 1);
  EXPECT_THROW(trainer::train_gated(sys, synthetic().train, quick(1)), ConfigError);
}

TEST(CrossEntropyBaseline, SeparableDataReachesNinetyNinePercent) {
  auto sys = trainer::System::create({}, 2, nullptr, models::DecoderOutput::class_probabilities, 3);
  auto cfg = quick(50);  // 500 steps
  cfg.track_accuracy = true;
  auto h = trainer::train_cross_entropy_baseline(sys, synthetic().train, cfg);
  double best = 0.0;
  for (const auto& e : h.epochs) best = std::max(best, e.accuracy);
  EXPECT_GE(best, 0.99);
}

TEST(CrossEntropyBaseline, ClassMismatchIsConfigError) {
  auto sys = trainer::System::create({}, 2, nullptr, models::DecoderOutput::class_probabilities, 5);
  EXPECT_THROW(trainer::train_cross_entropy_baseline(sys, synthetic().train, quick(1)), ConfigError);
}

TEST(CrossEntropyBaseline, Deterministic) {
  auto run = [] {
    auto sys = trainer::System::create({}, 3, nullptr, models::DecoderOutput::class_probabilities, 3);
    trainer::train_cross_entropy_baseline(sys, synthetic().train, quick(2));
    return sys.store.snapshot();
  };
  EXPECT_EQ(run(), run());
}

TEST(Evaluate, TransmissionRespectsPowerAndMask) {
  models::GateConfig gate;
  auto cfg = quick(1);
  gate.sigma2_min = cfg.sigma2_min();
  gate.sigma2_max = cfg.sigma2_max();
  auto sys = trainer::System::create({}, 5, &gate);
  trainer::EvalConfig ev;
  ev.snr_db = 30.0;
  auto tx = trainer::transmit_dataset(sys, synthetic().test, ev);
  for (Eigen::Index r = 0; r < tx.transmitted.rows(); ++r) {
    const double active = tx.activated_ratio[r] * 40.0;
    EXPECT_NEAR(tx.transmitted.row(r).squaredNorm(), active / 2.0, 1e-9);
    for (Eigen::Index c = 0; c < tx.transmitted.cols(); ++c) {
      if (tx.transmitted(r, c) == 0.0) {
        EXPECT_EQ(tx.received(r, c), 0.0);
      }
    }
  }
}

TEST(Evaluate, NeedsSubspacesForImageDecoder) {
  auto sys = trainer::System::create({}, 6);
  EXPECT_THROW(trainer::predict(sys, synthetic().test, {}, nullptr), DependencyError);
}

TEST(History, CsvHeader) {
  trainer::History h;
  h.epochs.push_back({1, -2.0, 2.5, 0.5, 0.9, 1.0});
  EXPECT_EQ(h.csv().substr(0, h.csv().find('\n')), "epoch,loss,rate_reduction,mse,accuracy,activated_ratio");
}
