#include "jscc/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "jscc/error.hpp"

namespace jscc::metrics {

double psnr(std::span<const double> s, std::span<const double> s_hat, double max_value) {
  if (s.size() != s_hat.size() || s.empty()) {
    throw DimensionError("psnr: image sizes " + std::to_string(s.size()) + " and " + std::to_string(s_hat.size()));
  }
  if (!(max_value > 0.0)) throw RangeError("psnr: max value must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - s_hat[i];
    mse += d * d;
  }
  mse /= static_cast<double>(s.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

double random_image_psnr() { return 10.0 * std::log10(6.0); }

double capacity(double snr_db) {
  if (!std::isfinite(snr_db)) throw RangeError("capacity: SNR must be finite");
  return std::log2(1.0 + std::pow(10.0, snr_db / 10.0));
}

double max_rate(double capacity_bits, double compression_ratio) { return compression_ratio * capacity_bits; }

double activated_ratio(const models::GateState& state) { return state.ratio(); }

double accuracy(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) {
    throw DimensionError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace jscc::metrics
