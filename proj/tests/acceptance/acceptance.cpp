// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Pass criterion numbers as arguments to run a subset.

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "finite_difference.hpp"
#include "jscc/channel.hpp"
#include "jscc/codec.hpp"
#include "jscc/data.hpp"
#include "jscc/metrics.hpp"
#include "jscc/objectives.hpp"
#include "jscc/presets.hpp"
#include "jscc/sscc.hpp"
#include "jscc/trainer.hpp"

using namespace jscc;
namespace obj = jscc::objectives;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

const presets::Dataset& toy() {
  static const presets::Dataset ds = presets::load({});
  return ds;
}

trainer::TrainConfig toy_config(std::uint64_t seed, double snr_db) {
  trainer::TrainConfig cfg;
  cfg.adam.learning_rate = 1e-3;
  cfg.batch_size = 128;
  cfg.epochs = 10;
  cfg.seed = seed;
  cfg.snr_db = snr_db;
  cfg.track_accuracy = false;
  return cfg;
}

trainer::EvalConfig eval_at(double snr_db, std::uint64_t seed) {
  trainer::EvalConfig ev;
  ev.snr_db = snr_db;
  ev.seed = seed;
  return ev;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng() % classes);
  return labels;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  Stopwatch clock;
  std::mt19937_64 rng(2024);
  auto dims = [&] { return std::pair<std::size_t, std::size_t>{2 + rng() % 31, 2 + rng() % 15}; };
  std::vector<std::pair<std::string, double>> worst;

  auto run = [&](const std::string& name, const std::function<double()>& instance) {
    double w = 0.0;
    for (int i = 0; i < 100; ++i) w = std::max(w, instance());
    worst.emplace_back(name, w);
  };

  run("rate-reduction", [&] {
    const auto [n, m] = dims();
    auto z = testing::random_parameter({n, m}, rng);
    const auto pi = data::build_membership(random_labels(n, 1 + rng() % 4, rng), 4);
    return testing::gradient_error({z}, [&] { return obj::rate_reduction(z, pi, {}); });
  });
  run("mse", [&] {
    const auto [n, m] = dims();
    auto s = testing::random_parameter({n, m}, rng, 0.0, 1.0);
    auto s_hat = testing::random_parameter({n, m}, rng, 0.0, 1.0);
    return testing::gradient_error({s, s_hat}, [&] { return obj::mse_loss(s, s_hat); });
  });
  run("unified", [&] {
    const auto [n, m] = dims();
    auto z = testing::random_parameter({n, m}, rng);
    auto s = ad::Tensor::constant({n, 16}, std::vector<double>(n * 16, 0.5));
    auto s_hat = testing::random_parameter({n, 16}, rng, 0.0, 1.0);
    const auto pi = data::build_membership(random_labels(n, 3, rng), 3);
    return testing::gradient_error({z, s_hat}, [&] { return obj::unified_loss(z, pi, s, s_hat, {}).total; });
  });
  run("ssim", [&] {
    const auto [n, m] = dims();
    auto s = testing::random_parameter({n, m}, rng, 0.0, 1.0);
    auto s_hat = testing::random_parameter({n, m}, rng, 0.0, 1.0);
    return testing::gradient_error({s, s_hat}, [&] { return obj::ssim_loss(s, s_hat); });
  });
  run("cross-entropy", [&] {
    const auto [n, m] = dims();
    auto logits = testing::random_parameter({n, m}, rng, -2.0, 2.0);
    const auto target = obj::one_hot(random_labels(n, m, rng), m);
    return testing::gradient_error({logits}, [&] { return obj::cross_entropy(ad::softmax(logits), target); });
  });

  bool ok = clock.seconds() < 120.0;
  std::string detail;
  for (const auto& [name, w] : worst) {
    ok = ok && w <= 1e-4;
    detail += fmt::format("{} {:.1e}, ", name, w);
  }
  return {ok, fmt::format("max relative error: {}time {:.1f}s", detail, clock.seconds())};
}

Outcome rate_reduction_invariants() {
  std::mt19937_64 rng(7);
  const obj::RateParams p;
  double lowest = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng() % 31, m = 2 + rng() % 15;
    auto z = testing::random_parameter({n, m}, rng);
    const auto pi = data::build_membership(random_labels(n, 1 + rng() % 5, rng), 5);
    lowest = std::min(lowest, obj::rate_reduction(z, pi, p).item());
  }

  double single_class = 0.0, rotation = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 2 + rng() % 31, m = 2 + rng() % 15;
    auto z = testing::random_parameter({n, m}, rng);
    single_class = std::max(single_class, std::abs(obj::rate_reduction(z, data::build_membership(std::vector<int>(n, 0), 1), p).item()));
    Eigen::MatrixXd g = Eigen::MatrixXd::NullaryExpr(m, m, [&] { return std::normal_distribution<double>()(rng); });
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> zm(z.value().data(), n, m);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> zr = zm * q;
    auto rotated = ad::Tensor::constant({n, m}, std::vector<double>(zr.data(), zr.data() + zr.size()));
    rotation = std::max(rotation, std::abs(obj::coding_rate(z, p).item() - obj::coding_rate(rotated, p).item()));
  }

  auto e12 = ad::Tensor::constant({2, 2}, {1, 0, 0, 1});
  auto e1 = ad::Tensor::constant({1, 1}, {1});
  const auto split = data::build_membership(std::vector<int>{0, 1}, 2);
  const double worked = std::max({std::abs(obj::coding_rate(e1, p).item() - 0.5 * std::log(3.0)),
                                  std::abs(obj::coding_rate(e12, p).item() - std::log(3.0)),
                                  std::abs(obj::class_rate(e12, split, p).item() - 0.5 * std::log(5.0)),
                                  std::abs(obj::rate_reduction(e12, split, p).item() - (std::log(3.0) - 0.5 * std::log(5.0)))});
  const double rounded = std::abs(obj::rate_reduction(e12, split, p).item() - 0.2939);

  const bool ok = lowest >= -1e-9 && single_class <= 1e-12 && rotation <= 1e-8 && worked <= 1e-9 && rounded < 5e-5;
  return {ok, fmt::format("min over 1000 draws {:.2e}, single-class max {:.1e}, rotation max {:.1e}, worked values max "
                          "error {:.1e}, 4-digit value off by {:.1e}",
                          lowest, single_class, rotation, worked, rounded)};
}

Outcome channel_suite() {
  Stopwatch clock;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;

  double power = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> f(2 * (1 + rng() % 64));
    for (auto& v : f) v = 10.0 * g(rng);
    const auto x = channel::normalize_power(channel::pack(f));
    double e = 0.0;
    for (const auto& s : x.symbols) e += std::norm(s);
    power = std::max(power, std::abs(e / static_cast<double>(x.size()) - 1.0));
  }

  double equalization = 0.0;
  for (auto model : {channel::Model::awgn, channel::Model::rayleigh, channel::Model::rician}) {
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> f(40);
      for (auto& v : f) v = g(rng);
      const auto x = channel::normalize_power(channel::pack(f));
      auto ch = channel::draw_channel_guarded({model, 2.0}, 10.0, x.size(), rng);
      const auto y = channel::equalize(channel::transmit(x, ch), ch);
      for (std::size_t k = 0; k < x.size(); ++k) {
        const auto expected = x.symbols[k] + ch.noise[k] / ch.gain;
        equalization = std::max(equalization, std::abs(y.symbols[k] - expected) / std::max(1.0, std::abs(expected)));
      }
    }
  }

  auto gain = [&](channel::ChannelSpec spec) {
    double sum = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) sum += std::norm(channel::draw_channel(spec, 10.0, 1, rng).gain);
    return sum / draws;
  };
  const double rayleigh = gain({channel::Model::rayleigh, 1.0});
  const double rician1 = gain({channel::Model::rician, 1.0});
  const double rician10 = gain({channel::Model::rician, 10.0});

  const bool ok = power <= 1e-9 && equalization <= 1e-14 && std::abs(rayleigh - 1.0) <= 0.02 &&
                  std::abs(rician1 - 1.0) <= 0.02 && std::abs(rician10 - 1.0) <= 0.02 && clock.seconds() < 60.0;
  return {ok, fmt::format("power error {:.1e}, equalization error {:.1e}, E|h|^2 rayleigh {:.4f} rician(K=1) {:.4f} "
                          "rician(K=10) {:.4f}, time {:.1f}s",
                          power, equalization, rayleigh, rician1, rician10, clock.seconds())};
}

struct ToyRun {
  trainer::System system;
  trainer::EvalResult trained;
  trainer::EvalResult untrained;
  double seconds = 0.0;
};

ToyRun train_toy(std::uint64_t seed) {
  Stopwatch clock;
  const auto& ds = toy();
  const auto ev = eval_at(10.0, seed + 100);
  auto baseline = trainer::System::create({}, seed);
  const auto untrained = trainer::evaluate(baseline, ds.test, ev, nullptr);
  auto sys = trainer::System::create({}, seed);
  trainer::train_jscc(sys, ds.train, toy_config(seed, 10.0));
  const auto subspaces = trainer::fit_received(sys, ds.train, ev);
  const auto trained = trainer::evaluate(sys, ds.test, ev, &subspaces);
  return {std::move(sys), trained, untrained, clock.seconds()};
}

ToyRun& toy_run() {
  static ToyRun run = train_toy(0);
  return run;
}

Outcome toy_training() {
  auto& first = toy_run();
  auto second = train_toy(0);
  const bool deterministic = first.system.store.snapshot() == second.system.store.snapshot() &&
                             first.trained.psnr == second.trained.psnr &&
                             first.trained.accuracy == second.trained.accuracy;
  const double gain = first.trained.psnr - first.untrained.psnr;
  const bool ok = first.trained.accuracy >= 0.90 && gain >= 5.0 && first.seconds < 300.0 && deterministic;
  return {ok, fmt::format("accuracy {:.4f}, PSNR {:.2f} dB vs untrained {:.2f} dB (+{:.2f}), time {:.1f}s, "
                          "repeat run {}",
                          first.trained.accuracy, first.trained.psnr, first.untrained.psnr, gain, first.seconds,
                          deterministic ? "identical" : "differs")};
}

Outcome channel_aware_benefit() {
  const auto& ds = toy();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ev = eval_at(0.0, seed + 100);
    auto aware = trainer::System::create({}, seed);
    trainer::train_jscc(aware, ds.train, toy_config(seed, 0.0));
    auto blind = trainer::System::create({}, seed);
    auto cfg = toy_config(seed, 0.0);
    cfg.noiseless = true;
    trainer::train_jscc(blind, ds.train, cfg);
    const double a = trainer::evaluate(aware, ds.test, ev, nullptr).psnr;
    const double b = trainer::evaluate(blind, ds.test, ev, nullptr).psnr;
    ok = ok && a - b >= 1.0;
    detail += fmt::format("seed {}: {:.2f} vs {:.2f} dB (+{:.2f}); ", seed, a, b, a - b);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome gated_suite() {
  const auto& ds = toy();
  auto cfg = toy_config(0, 10.0);
  cfg.epochs = 100;
  cfg.gate_cost = 0.05;
  models::GateConfig gate;
  gate.sigma2_min = cfg.sigma2_min();
  gate.sigma2_max = cfg.sigma2_max();
  auto sys = trainer::System::create({}, 0, &gate);
  trainer::train_gated(sys, ds.train, cfg);

  std::vector<double> ratios;
  for (int i = 0; i < 25; ++i) {
    const double s2 = gate.sigma2_min + (gate.sigma2_max - gate.sigma2_min) * i / 24.0;
    ratios.push_back(sys.gate->forward(s2).ratio());
  }
  const bool monotone = std::is_sorted(ratios.begin(), ratios.end());
  const double low = sys.gate->forward(channel::noise_power_from_snr(21.0)).ratio();
  const double high = sys.gate->forward(channel::noise_power_from_snr(-3.0)).ratio();

  double worst_gap = 0.0;
  std::string accuracies;
  for (double snr = -3.0; snr <= 21.0; snr += 3.0) {
    const auto ev = eval_at(snr, 5);
    const auto sub = trainer::fit_received(sys, ds.train, ev);
    const double gated_acc = trainer::evaluate(sys, ds.test, ev, &sub).accuracy;
    auto fixed = trainer::System::create({}, 0);
    auto fixed_cfg = cfg;
    fixed_cfg.snr_db = snr;
    trainer::train_jscc(fixed, ds.train, fixed_cfg);
    const auto fixed_sub = trainer::fit_received(fixed, ds.train, ev);
    const double fixed_acc = trainer::evaluate(fixed, ds.test, ev, &fixed_sub).accuracy;
    worst_gap = std::max(worst_gap, fixed_acc - gated_acc);
    accuracies += fmt::format(" {:g}:{:.3f}/{:.3f}", snr, gated_acc, fixed_acc);
  }
  const bool ok = monotone && low < high && worst_gap <= 0.05;
  return {ok, fmt::format("ratio non-decreasing over 25 points: {}, ratio {:.3f} at 21 dB vs {:.3f} at -3 dB, "
                          "largest accuracy shortfall {:.3f} (gated/fixed:{})",
                          monotone ? "yes" : "no", low, high, worst_gap, accuracies)};
}

Outcome label_corruption() {
  const auto& ds = toy();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto noisy = ds.train;
    noisy.labels = data::corrupt_labels(ds.train.labels, ds.train.classes, {0.5, seed});
    auto cfg = toy_config(seed, 10.0);
    cfg.epochs = 50;
    const auto ev = eval_at(10.0, seed + 100);

    auto rr_cfg = cfg;
    rr_cfg.rate.beta = 0.0;
    auto rr = trainer::System::create({}, seed);
    trainer::train_jscc(rr, noisy, rr_cfg);
    const auto sub = trainer::fit_received(rr, noisy, ev);
    const double rr_acc = trainer::evaluate(rr, ds.test, ev, &sub).accuracy;

    auto ce = trainer::System::create({}, seed, nullptr, models::DecoderOutput::class_probabilities, ds.train.classes);
    trainer::train_cross_entropy_baseline(ce, noisy, cfg);
    const double ce_acc = trainer::evaluate(ce, ds.test, ev, nullptr).accuracy;
    ok = ok && rr_acc >= ce_acc;
    detail += fmt::format("seed {}: rate-reduction {:.3f} vs cross-entropy {:.3f}; ", seed, rr_acc, ce_acc);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome sscc_cliff() {
  const auto& ds = toy();
  const codec::BlockTransformCodec codec;
  const sscc::SsccConfig cfg{0.316, &codec};
  std::mt19937_64 rng(0);

  std::vector<double> grid;
  for (double s = -3.0; s <= 21.0; s += 3.0) grid.push_back(s);
  std::vector<double> sscc_psnr;
  for (double snr : grid) {
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.test.count; ++i) {
      const auto px = ds.test.image(i);
      const codec::Image image{ds.test.height, ds.test.width, ds.test.channels, {px.begin(), px.end()}};
      sum += metrics::psnr(px, sscc::sscc_transmit(image, snr, cfg, rng).image.pixels);
    }
    sscc_psnr.push_back(sum / static_cast<double>(ds.test.count));
  }
  std::size_t step = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (sscc_psnr[i] - sscc_psnr[i - 1] > sscc_psnr[step + 1] - sscc_psnr[step]) step = i - 1;
  }
  const double jump = sscc_psnr[step + 1] - sscc_psnr[step];

  auto jscc_psnr = [&](double snr) {
    auto sys = trainer::System::create({}, 0);
    trainer::train_jscc(sys, ds.train, toy_config(0, snr));
    return trainer::evaluate(sys, ds.test, eval_at(snr, 100), nullptr).psnr;
  };
  const double before = jscc_psnr(grid[step]), after = jscc_psnr(grid[step + 1]);
  const double change = std::abs(after - before);
  const bool unit_capacity = metrics::capacity(0.0) == 1.0;

  const bool ok = jump >= 5.0 && change <= 2.0 && unit_capacity;
  return {ok, fmt::format("SSCC jumps {:.2f} dB between {:g} and {:g} dB; JSCC {:.2f} -> {:.2f} dB ({:.2f}); "
                          "capacity(0 dB) = {}",
                          jump, grid[step], grid[step + 1], before, after, change, metrics::capacity(0.0))};
}

Outcome discretization() {
  const bool examples = trainer::discretize_sigma(0.3, 0.0, 1.0, 4) == 0.375 &&
                        trainer::discretize_sigma(0.0, 0.0, 1.0, 4) == 0.125 &&
                        trainer::discretize_sigma(0.999, 0.0, 1.0, 4) == 0.875;
  const double hi = channel::noise_power_from_snr(-3.0);
  double worst = 0.0;
  bool ok = examples;
  for (std::size_t k : {1u, 4u, 8u, 16u}) {
    const double bound = hi / (2.0 * static_cast<double>(k));
    for (int i = 0; i < 10000; ++i) {
      const double s2 = hi * i / 9999.0;
      const double err = std::abs(trainer::discretize_sigma(s2, 0.0, hi, k) - s2);
      worst = std::max(worst, err / bound);
      ok = ok && err <= bound * (1.0 + 1e-12);
    }
  }
  return {ok, fmt::format("worked examples {}, largest error / bound {:.6f} over 10^4 points for k = 1, 4, 8, 16",
                          examples ? "exact" : "wrong", worst)};
}

Outcome feature_geometry() {
  auto& run = toy_run();
  const auto& test = toy().test;
  const auto tx = trainer::transmit_dataset(run.system, test, eval_at(10.0, 100));
  const Eigen::MatrixXd& f = tx.transmitted;

  double cos_sum = 0.0;
  std::size_t pairs = 0;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index k = i + 1; k < f.rows(); ++k) {
      if (test.labels[i] == test.labels[k]) continue;
      cos_sum += std::abs(f.row(i).dot(f.row(k))) / (f.row(i).norm() * f.row(k).norm());
      ++pairs;
    }
  }
  const double cosine = cos_sum / static_cast<double>(pairs);

  double energy = 0.0;
  for (std::size_t j = 0; j < test.classes; ++j) {
    std::vector<Eigen::Index> members;
    for (std::size_t i = 0; i < test.count; ++i) {
      if (test.labels[i] == static_cast<int>(j)) members.push_back(static_cast<Eigen::Index>(i));
    }
    const Eigen::MatrixXd block = f(members, Eigen::all);
    const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(block).singularValues();
    const auto p = std::min<Eigen::Index>(10, s.size());
    energy += s.head(p).squaredNorm() / s.squaredNorm();
  }
  energy /= static_cast<double>(test.classes);

  return {cosine <= 0.1 && energy >= 0.8,
          fmt::format("mean |cos| across classes {:.4f}, mean leading-10 energy within class {:.4f}", cosine, energy)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"gradients", gradients},
      {"rate-reduction invariants", rate_reduction_invariants},
      {"channel", channel_suite},
      {"toy training", toy_training},
      {"channel-aware training", channel_aware_benefit},
      {"gated transmission", gated_suite},
      {"label corruption", label_corruption},
      {"separate coding cliff", sscc_cliff},
      {"noise discretization", discretization},
      {"feature geometry", feature_geometry},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome out;
    try {
      out = checks[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    failures += out.pass ? 0 : 1;
    fmt::print("{} {:>2} {}: {}\n", out.pass ? "PASS" : "FAIL", id, checks[i].first, out.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
