#pragma once

#include <span>

#include "jscc/models.hpp"

namespace jscc::metrics {

/// 10 log10(max^2 / MSE); +inf when the images are identical.
double psnr(std::span<const double> s, std::span<const double> s_hat, double max_value = 1.0);

/// Expected PSNR between two independent uniform [0, 1] images: 10 log10(6).
double random_image_psnr();

/// Shannon capacity log2(1 + SNR) in bits per complex symbol.
double capacity(double snr_db);
/// Largest source rate in bits per pixel: ratio * capacity.
double max_rate(double capacity_bits, double compression_ratio);

double activated_ratio(const models::GateState& state);

/// Fraction of positions where prediction equals truth.
double accuracy(std::span<const int> predictions, std::span<const int> truth);

}  // namespace jscc::metrics
