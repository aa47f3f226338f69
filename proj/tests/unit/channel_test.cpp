#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finite_difference.hpp"
#include "jscc/channel.hpp"
#include "jscc/error.hpp"

using namespace jscc;
using channel::Complex;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(Pack, LayoutAndRoundTrip) {
  auto x = channel::pack(std::vector<double>{1, 2, 3, 4});
  ASSERT_EQ(x.size(), 2u);
  EXPECT_EQ(x.symbols[0], Complex(1, 3));
  EXPECT_EQ(x.symbols[1], Complex(2, 4));
  auto zero = channel::pack(std::vector<double>(6, 0.0));
  for (auto s : zero.symbols) EXPECT_EQ(s, Complex(0, 0));
  std::mt19937_64 rng(1);
  auto v = random_vector(32, rng);
  EXPECT_EQ(channel::unpack(channel::pack(v)), v);
  EXPECT_THROW(channel::pack(std::vector<double>{1, 2, 3}), LayoutError);
}

TEST(NormalizePower, Examples) {
  auto y = channel::normalize_power(channel::SymbolVector{{Complex(2, 0), Complex(0, 0)}});
  EXPECT_NEAR(y.symbols[0].real(), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(y.symbols[1], Complex(0, 0));
  channel::SymbolVector unit{{Complex(1, 0), Complex(0, 1)}};
  auto same = channel::normalize_power(unit);
  EXPECT_NEAR(std::abs(same.symbols[0] - unit.symbols[0]), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(same.symbols[1] - unit.symbols[1]), 0.0, 1e-15);
  EXPECT_THROW(channel::normalize_power(channel::SymbolVector{{Complex(0, 0)}}), DegenerateInputError);
}

TEST(Channel, AwgnAtZeroDb) {
  std::mt19937_64 rng(2);
  auto ch = channel::draw_channel({}, 0.0, 4, rng);
  EXPECT_EQ(ch.gain, Complex(1, 0));
  EXPECT_DOUBLE_EQ(ch.noise_power, 1.0);
  EXPECT_DOUBLE_EQ(ch.equivalent_noise_power(), 1.0);
}

TEST(Channel, RicianLargeKApproachesUnitGain) {
  std::mt19937_64 rng(3);
  auto ch = channel::draw_channel({channel::Model::rician, 1e12}, 10.0, 1, rng);
  EXPECT_NEAR(std::abs(ch.gain - Complex(1, 0)), 0.0, 1e-5);
  EXPECT_THROW(channel::draw_channel({channel::Model::rician, -1.0}, 10.0, 1, rng), ConfigError);
}

TEST(Channel, BlockFadingSharesGain) {
  std::mt19937_64 rng(4);
  auto x = channel::normalize_power(channel::pack(random_vector(16, rng)));
  auto ch = channel::draw_channel({channel::Model::rayleigh, 1.0}, 5.0, x.size(), rng);
  auto y = channel::transmit(x, ch);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(y.symbols[i] - ch.gain * x.symbols[i] - ch.noise[i]), 1e-15);
}

TEST(Transmit, Examples) {
  channel::SymbolVector x{{Complex(1, 2), Complex(-1, 0.5)}};
  auto id = channel::identity_channel(2);
  EXPECT_EQ(channel::transmit(x, id).symbols, x.symbols);
  auto twice = id;
  twice.gain = 2.0;
  auto y = channel::transmit(x, twice);
  EXPECT_EQ(y.symbols[0], Complex(2, 4));
  EXPECT_THROW(channel::transmit(x, channel::identity_channel(3)), LayoutError);
}

TEST(Equalize, Examples) {
  channel::SymbolVector x{{Complex(1, 2), Complex(-1, 0.5)}};
  auto ch = channel::identity_channel(2);
  EXPECT_EQ(channel::equalize(x, ch).symbols, x.symbols);
  ch.gain = 0.5;
  auto back = channel::equalize(channel::transmit(x, ch), ch);
  EXPECT_EQ(back.symbols, x.symbols);
  ch.gain = 0.0;
  EXPECT_THROW(channel::equalize(x, ch), DeepFadeError);
}

TEST(Channel, NoisePowerFromSnr) {
  EXPECT_DOUBLE_EQ(channel::noise_power_from_snr(10.0), 0.1);
  EXPECT_NEAR(channel::snr_from_noise_power(channel::noise_power_from_snr(-3.0)), -3.0, 1e-12);
}

TEST(Channel, AwgnEquivalenceOfEqualizedNoise) {
  std::mt19937_64 rng(5);
  const int draws = 100000;
  double ratio = 0.0;
  for (int t = 0; t < draws; ++t) {
    auto ch = channel::draw_channel({channel::Model::rayleigh, 1.0}, 3.0, 1, rng);
    if (std::abs(ch.gain) < 1e-3) continue;
    const Complex eq = ch.noise[0] / ch.gain;
    ratio += std::norm(eq) / ch.equivalent_noise_power();
  }
  EXPECT_NEAR(ratio / draws, 1.0, 0.02);
}

TEST(ChannelLayer, GradientPassesThroughAffineMap) {
  std::mt19937_64 rng(6);
  auto x = jscc::testing::random_parameter({3, 8}, rng);
  std::vector<channel::ChannelRealization> per_row;
  for (int i = 0; i < 3; ++i) per_row.push_back(channel::draw_channel({channel::Model::rician, 2.0}, 5.0, 4, rng));
  auto w = jscc::testing::random_parameter({3, 8}, rng);
  auto loss = [&] {
    return ad::sum(ad::mul(channel::graph::transmit_equalize(channel::graph::normalize_power(x), per_row), w));
  };
  EXPECT_LE(jscc::testing::gradient_error({x}, loss), 1e-6);
  auto xn = channel::graph::normalize_power(x);
  for (std::size_t r = 0; r < 3; ++r) {
    double e = 0.0;
    for (std::size_t c = 0; c < 8; ++c) e += xn.at(r, c) * xn.at(r, c);
    EXPECT_NEAR(e / 4.0, 1.0, 1e-12);
  }
}
