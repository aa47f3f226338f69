#include "jscc/channel.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "jscc/error.hpp"

namespace jscc::channel {

namespace {

Complex unit_gaussian(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  const double re = gauss(rng);
  const double im = gauss(rng);
  return {re, im};
}

}  // namespace

Model parse_model(const std::string& name) {
  if (name == "awgn") return Model::awgn;
  if (name == "rayleigh") return Model::rayleigh;
  if (name == "rician") return Model::rician;
  throw ConfigError("unknown channel model '" + name + "' (expected awgn|rayleigh|rician)");
}

std::string to_string(Model model) {
  switch (model) {
    case Model::awgn: return "awgn";
    case Model::rayleigh: return "rayleigh";
    case Model::rician: return "rician";
  }
  return "unknown";
}

SymbolVector pack(std::span<const double> features) {
  if (features.size() % 2 != 0) {
    throw LayoutError("cannot pack " + std::to_string(features.size()) + " reals into complex symbols");
  }
  const std::size_t b = features.size() / 2;
  SymbolVector x;
  x.symbols.resize(b);
  for (std::size_t i = 0; i < b; ++i) x.symbols[i] = {features[i], features[b + i]};
  return x;
}

std::vector<double> unpack(const SymbolVector& x) {
  const std::size_t b = x.size();
  std::vector<double> out(2 * b);
  for (std::size_t i = 0; i < b; ++i) {
    out[i] = x.symbols[i].real();
    out[b + i] = x.symbols[i].imag();
  }
  return out;
}

SymbolVector normalize_power(const SymbolVector& x) {
  double energy = 0.0;
  for (const auto& s : x.symbols) energy += std::norm(s);
  if (!(energy > 0.0)) throw DegenerateInputError("cannot power-normalize a zero symbol vector");
  const double factor = std::sqrt(static_cast<double>(x.size())) / std::sqrt(energy);
  SymbolVector out = x;
  for (auto& s : out.symbols) s *= factor;
  return out;
}

double noise_power_from_snr(double snr_db) {
  if (!std::isfinite(snr_db)) throw ConfigError("SNR must be finite");
  return std::pow(10.0, -snr_db / 10.0);
}

double snr_from_noise_power(double noise_power) { return -10.0 * std::log10(noise_power); }

ChannelRealization draw_channel(const ChannelSpec& spec, double snr_db, std::size_t symbols,
                                std::mt19937_64& rng) {
  ChannelRealization ch;
  ch.model = spec.model;
  ch.noise_power = noise_power_from_snr(snr_db);
  switch (spec.model) {
    case Model::awgn:
      ch.gain = {1.0, 0.0};
      break;
    case Model::rayleigh:
      ch.gain = unit_gaussian(rng);
      break;
    case Model::rician: {
      if (spec.rician_k < 0.0) throw ConfigError("Rician K-factor must be nonnegative");
      if (std::isinf(spec.rician_k)) {
        ch.gain = {1.0, 0.0};
        break;
      }
      const double k = spec.rician_k;
      ch.gain = std::sqrt(k / (k + 1.0)) + std::sqrt(1.0 / (k + 1.0)) * unit_gaussian(rng);
      break;
    }
  }
  ch.noise.resize(symbols);
  const double amplitude = std::sqrt(ch.noise_power);
  for (auto& n : ch.noise) n = amplitude * unit_gaussian(rng);
  return ch;
}

ChannelRealization draw_channel_guarded(const ChannelSpec& spec, double snr_db, std::size_t symbols,
                                        std::mt19937_64& rng) {
  for (;;) {
    ChannelRealization ch = draw_channel(spec, snr_db, symbols, rng);
    if (std::abs(ch.gain) >= kDeepFadeThreshold) return ch;
    spdlog::warn("deep fade |h| = {:.3g}; redrawing channel", std::abs(ch.gain));
  }
}

ChannelRealization draw_awgn_noise_power(double noise_power, std::size_t symbols,
                                         std::mt19937_64& rng) {
  if (!(noise_power >= 0.0)) throw ConfigError("noise power must be nonnegative");
  ChannelRealization ch;
  ch.noise_power = noise_power;
  ch.noise.resize(symbols);
  const double amplitude = std::sqrt(noise_power);
  for (auto& n : ch.noise) n = amplitude * unit_gaussian(rng);
  return ch;
}

ChannelRealization identity_channel(std::size_t symbols) {
  ChannelRealization ch;
  ch.noise.assign(symbols, Complex{0.0, 0.0});
  return ch;
}

SymbolVector transmit(const SymbolVector& x, const ChannelRealization& ch) {
  if (ch.noise.size() != x.size()) {
    throw LayoutError("noise has " + std::to_string(ch.noise.size()) + " symbols, signal has " +
                      std::to_string(x.size()));
  }
  SymbolVector y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.symbols[i] = ch.gain * x.symbols[i] + ch.noise[i];
  return y;
}

SymbolVector equalize(const SymbolVector& y, const ChannelRealization& ch) {
  if (std::abs(ch.gain) < kDeepFadeThreshold) {
    throw DeepFadeError("channel gain |h| = " + std::to_string(std::abs(ch.gain)) +
                        " is a deep fade; equalization undefined");
  }
  SymbolVector out = y;
  for (auto& s : out.symbols) s /= ch.gain;
  return out;
}

namespace graph {

ad::Tensor normalize_power(const ad::Tensor& features) {
  if (features.rank() != 2 || features.dim(1) % 2 != 0) {
    throw LayoutError("power normalization expects [N x 2b] features, got " +
                      ad::to_string(features.shape()));
  }
  const double b = static_cast<double>(features.dim(1) / 2);
  return normalize_power(features, ad::Tensor::full({features.dim(0), 1}, b));
}

ad::Tensor normalize_power(const ad::Tensor& features, const ad::Tensor& symbols) {
  ad::Tensor energy = ad::sum(ad::square(features), 1);
  for (double e : energy.value()) {
    if (!(e > 0.0)) throw DegenerateInputError("cannot power-normalize a zero feature row");
  }
  return ad::mul(features, ad::sqrt(ad::div(symbols, energy)));
}

ad::Tensor transmit_equalize(const ad::Tensor& x_hat, std::span<const ChannelRealization> per_row,
                             std::span<const double> noise_scale) {
  if (x_hat.rank() != 2 || x_hat.dim(1) % 2 != 0) {
    throw LayoutError("channel layer expects [N x 2b] symbols, got " + ad::to_string(x_hat.shape()));
  }
  const std::size_t n = x_hat.dim(0), width = x_hat.dim(1), b = width / 2;
  if (per_row.size() != n) {
    throw LayoutError("channel layer needs one realization per row: " + std::to_string(per_row.size()) +
                      " for " + std::to_string(n) + " rows");
  }
  if (!noise_scale.empty() && noise_scale.size() != x_hat.size()) {
    throw LayoutError("noise scale must have one entry per feature");
  }
  std::vector<double> out(x_hat.size());
  auto xv = x_hat.value();
  for (std::size_t r = 0; r < n; ++r) {
    SymbolVector x = pack(xv.subspan(r * width, width));
    ChannelRealization ch = per_row[r];
    if (ch.noise.size() != b) throw LayoutError("realization noise length differs from symbol count");
    if (!noise_scale.empty()) {
      for (std::size_t i = 0; i < b; ++i) {
        ch.noise[i] = {ch.noise[i].real() * noise_scale[r * width + i],
                       ch.noise[i].imag() * noise_scale[r * width + b + i]};
      }
    }
    auto y = unpack(equalize(transmit(x, ch), ch));
    std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  std::vector<Complex> gains(n);
  for (std::size_t r = 0; r < n; ++r) gains[r] = per_row[r].gain;
  ad::Node* px = x_hat.node();
  return ad::detail::make_result(
      "channel", x_hat.shape(), std::move(out), {x_hat},
      [px, gains = std::move(gains), b, width](const ad::Node& self) {
        // Adjoint of x -> (h x) / h: multiply by conj(1/h), then by conj(h).
        for (std::size_t r = 0; r < gains.size(); ++r) {
          const Complex inv = std::conj(Complex{1.0, 0.0} / gains[r]);
          const Complex h = std::conj(gains[r]);
          for (std::size_t i = 0; i < b; ++i) {
            const Complex g{self.grad[r * width + i], self.grad[r * width + b + i]};
            const Complex gx = (g * inv) * h;
            px->grad[r * width + i] += gx.real();
            px->grad[r * width + b + i] += gx.imag();
          }
        }
      });
}

}  // namespace graph

}  // namespace jscc::channel
