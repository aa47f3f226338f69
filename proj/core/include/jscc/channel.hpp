#pragma once

#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jscc/autodiff.hpp"

namespace jscc::channel {

using Complex = std::complex<double>;

/// Channel gains with |h| below this are treated as a deep fade.
inline constexpr double kDeepFadeThreshold = 1e-6;

/// b complex symbols; the real layout is [Re(x_0..x_{b-1}), Im(x_0..x_{b-1})].
struct SymbolVector {
  std::vector<Complex> symbols;
  std::size_t size() const { return symbols.size(); }
};

enum class Model { awgn, rayleigh, rician };

Model parse_model(const std::string& name);
std::string to_string(Model model);

struct ChannelSpec {
  Model model = Model::awgn;
  double rician_k = 1.0;
};

/// One block-fading draw: the gain is shared by every symbol of an image.
struct ChannelRealization {
  Model model = Model::awgn;
  Complex gain{1.0, 0.0};
  double noise_power = 0.0;
  std::vector<Complex> noise;

  /// sigma^2 / |h|^2, the noise power left after equalization.
  double equivalent_noise_power() const { return noise_power / std::norm(gain); }
};

SymbolVector pack(std::span<const double> features);
std::vector<double> unpack(const SymbolVector& x);

/// sqrt(b) * x / ||x||, so that ||x||^2 = b.
SymbolVector normalize_power(const SymbolVector& x);

/// Noise power for unit average symbol power: 10^(-snr_db / 10).
double noise_power_from_snr(double snr_db);
double snr_from_noise_power(double noise_power);

ChannelRealization draw_channel(const ChannelSpec& spec, double snr_db, std::size_t symbols,
                                std::mt19937_64& rng);
/// Redraws while |h| is below the deep-fade threshold; each redraw is logged.
ChannelRealization draw_channel_guarded(const ChannelSpec& spec, double snr_db,
                                        std::size_t symbols, std::mt19937_64& rng);
/// AWGN draw with the given equivalent noise power (h = 1).
ChannelRealization draw_awgn_noise_power(double noise_power, std::size_t symbols,
                                         std::mt19937_64& rng);
/// Unit-gain, zero-noise realization.
ChannelRealization identity_channel(std::size_t symbols);

/// y = h * x + n.
SymbolVector transmit(const SymbolVector& x, const ChannelRealization& ch);
/// y / h; throws DeepFadeError when |h| is below the deep-fade threshold.
SymbolVector equalize(const SymbolVector& y, const ChannelRealization& ch);

namespace graph {

/// Row-wise power normalization of [N x 2b] features to b symbols of unit power.
ad::Tensor normalize_power(const ad::Tensor& features);
/// Row-wise normalization to `symbols` (an [N x 1] tensor) units of power.
ad::Tensor normalize_power(const ad::Tensor& features, const ad::Tensor& symbols);

/// Non-trainable channel layer: transmit then equalize each row with its own
/// realization. Gradients pass through the affine map. `noise_scale`, when
/// non-empty, multiplies the noise on each real entry of each row (length N*2b).
ad::Tensor transmit_equalize(const ad::Tensor& x_hat, std::span<const ChannelRealization> per_row,
                             std::span<const double> noise_scale = {});

}  // namespace graph

}  // namespace jscc::channel
