#include "jscc/sscc.hpp"

#include "jscc/channel.hpp"
#include "jscc/error.hpp"
#include "jscc/metrics.hpp"

namespace jscc::sscc {

void SsccConfig::validate() const {
  if (!(compression_ratio > 0.0 && compression_ratio <= 1.0)) {
    throw ConfigError("compression ratio must lie in (0, 1]");
  }
  if (!codec) throw DependencyError("SSCC baseline needs a codec");
}

SsccResult sscc_transmit(const codec::Image& image, double snr_db, const SsccConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  SsccResult out;
  out.max_rate = metrics::max_rate(metrics::capacity(snr_db), cfg.compression_ratio);
  try {
    out.min_rate = cfg.codec->min_rate(image);
    if (out.min_rate > out.max_rate) {
      out.image = image;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (auto& p : out.image.pixels) p = u(rng);
      return out;
    }
    const auto enc = cfg.codec->encode(image, out.max_rate);
    out.image = cfg.codec->decode(enc.bitstream);
    out.rate = enc.rate;
    out.delivered = true;
  } catch (const BaselineError&) {
    throw;
  } catch (const Error& e) {
    throw BaselineError(std::string("codec failure: ") + e.what());
  }
  return out;
}

int sscc_classify(const codec::Image& image, models::Encoder* encoder, const classifier::SubspaceModel* subspaces) {
  if (!encoder || !subspaces || subspaces->classes.empty()) {
    throw DependencyError("SSCC classification needs a trained encoder and fitted subspaces");
  }
  ad::Tensor x = models::image_tensor(image.pixels, 1, image.size());
  ad::Tensor features = channel::graph::normalize_power(encoder->forward(x, false));
  auto v = features.value();
  return classifier::classify(*subspaces, Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

}  // namespace jscc::sscc
