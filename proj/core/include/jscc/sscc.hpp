#pragma once

#include <cstdint>
#include <random>

#include "jscc/classifier.hpp"
#include "jscc/codec.hpp"
#include "jscc/models.hpp"

namespace jscc::sscc {

struct SsccConfig {
  /// Channel symbols per source pixel, b / B.
  double compression_ratio = 0.316;
  const codec::Codec* codec = nullptr;

  void validate() const;
};

struct SsccResult {
  codec::Image image;
  bool delivered = false;
  double max_rate = 0.0;
  double min_rate = 0.0;
  /// Rate actually used; zero when the link failed.
  double rate = 0.0;
};

/// Separate source/channel coding over an ideal capacity-achieving link. When
/// the codec's minimum rate exceeds the link's maximum rate the receiver
/// outputs a uniform random image; otherwise the image is coded at the
/// largest rate that fits and decoded without errors.
SsccResult sscc_transmit(const codec::Image& image, double snr_db, const SsccConfig& cfg, std::mt19937_64& rng);

/// Classifies a received image through a noiseless pass of a trained encoder
/// and the fitted subspaces.
int sscc_classify(const codec::Image& image, models::Encoder* encoder, const classifier::SubspaceModel* subspaces);

}  // namespace jscc::sscc
