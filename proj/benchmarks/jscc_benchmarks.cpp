#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <random>

#include "jscc/classifier.hpp"
#include "jscc/data.hpp"
#include "jscc/objectives.hpp"
#include "jscc/presets.hpp"
#include "jscc/trainer.hpp"

using namespace jscc;

namespace {

ad::Tensor random_features(std::size_t n, std::size_t m, std::uint64_t seed, bool trainable = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n * m);
  for (auto& x : v) x = g(rng);
  return trainable ? ad::Tensor::parameter({n, m}, std::move(v)) : ad::Tensor::constant({n, m}, std::move(v));
}

std::vector<int> cyclic_labels(std::size_t n, std::size_t classes) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  return labels;
}

void BM_LogdetPsd(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  auto z = random_features(2 * m, m, 1);
  auto gram = ad::add(ad::Tensor::eye(m), ad::matmul(ad::transpose(z), z));
  for (auto _ : state) benchmark::DoNotOptimize(ad::logdet_psd(gram).item());
}
BENCHMARK(BM_LogdetPsd)->Arg(16)->Arg(40)->Arg(128);

void BM_RateReductionForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto z = random_features(n, 40, 2, true);
  const auto pi = data::build_membership(cyclic_labels(n, 3), 3);
  for (auto _ : state) {
    z.zero_grad();
    ad::backward(objectives::rate_reduction(z, pi, {}));
    benchmark::DoNotOptimize(z.grad().data());
  }
}
BENCHMARK(BM_RateReductionForwardBackward)->Arg(128)->Arg(512)->Arg(2048);

void BM_TrainEpoch(benchmark::State& state) {
  const auto ds = presets::load({});
  trainer::TrainConfig cfg;
  cfg.adam.learning_rate = 1e-3;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  cfg.epochs = 1;
  cfg.track_accuracy = false;
  auto sys = trainer::System::create({}, 0);
  for (auto _ : state) trainer::train_jscc(sys, ds.train, cfg);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * ds.train.count));
}
BENCHMARK(BM_TrainEpoch)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_NearestSubspace(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd train = Eigen::MatrixXd::NullaryExpr(600, 40, [&] { return g(rng); });
  const auto model = classifier::fit_subspaces(train, cyclic_labels(600, 3), 3);
  const Eigen::MatrixXd queries = Eigen::MatrixXd::NullaryExpr(n, 40, [&] { return g(rng); });
  for (auto _ : state) benchmark::DoNotOptimize(classifier::classify_rows(model, queries));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_NearestSubspace)->Arg(100)->Arg(1000);

}  // namespace
int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
}
