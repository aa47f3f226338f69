#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace jscc::codec {

/// One image, row-major [height x width x channels], pixels in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  std::size_t size() const { return height * width * channels; }
};

struct Encoded {
  std::vector<std::uint8_t> bitstream;
  std::size_t bits = 0;
  /// bits per pixel
  double rate = 0.0;
  std::size_t level = 0;
};

/// Lossy image codec used by the separate source/channel coding baseline.
class Codec {
 public:
  virtual ~Codec() = default;
  /// Encodes at the largest achievable rate not above `target_rate`;
  /// throws BaselineError when no such rate exists.
  virtual Encoded encode(const Image& image, double target_rate) const = 0;
  virtual Image decode(const std::vector<std::uint8_t>& bitstream) const = 0;
  /// Achievable rates (bits per pixel) for this image, one per quality level.
  virtual std::vector<double> rates(const Image& image) const = 0;
  virtual double min_rate(const Image& image) const;
};

struct BlockCodecConfig {
  /// Zigzag coefficients kept at level 0; level l keeps base + l.
  std::size_t base_coefficients = 6;
  /// Quantizer step at level 0, halved every `halving_levels` levels.
  double base_step = 0.25;
  double halving_levels = 16.0;
  /// Width of the fixed-length codes of level 0.
  std::size_t base_bits = 5;
};

/// 8x8 orthonormal DCT blocks, zigzag truncation and uniform quantization.
/// The stream starts with a 32-bit header (12-bit height, 12-bit width,
/// 2-bit channels - 1, 6-bit level). Level 0 is a base layer of fixed-length
/// codes, so its rate depends only on the image size; higher levels use an
/// end-of-block count and signed Exp-Golomb codes per block.
class BlockTransformCodec final : public Codec {
 public:
  static constexpr std::size_t kBlock = 8;
  static constexpr std::size_t kLevels = 64;
  static constexpr std::size_t kHeaderBits = 32;

  explicit BlockTransformCodec(BlockCodecConfig cfg = {});

  Encoded encode(const Image& image, double target_rate) const override;
  Image decode(const std::vector<std::uint8_t>& bitstream) const override;
  std::vector<double> rates(const Image& image) const override;

  Encoded encode_level(const Image& image, std::size_t level) const;
  std::size_t coefficients(std::size_t level) const;
  double step(std::size_t level) const;

 private:
  BlockCodecConfig cfg_;
};

/// Orthonormal 2-D DCT-II of one 8x8 block (row-major), and its inverse.
std::vector<double> dct8x8(const std::vector<double>& block);
std::vector<double> idct8x8(const std::vector<double>& coefficients);

}  // namespace jscc::codec
