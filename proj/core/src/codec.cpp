#include "jscc/codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "jscc/error.hpp"

namespace jscc::codec {

namespace {

constexpr std::size_t N = BlockTransformCodec::kBlock;

const std::array<std::size_t, 64>& zigzag() {
  static const std::array<std::size_t, 64> order = [] {
    std::array<std::size_t, 64> out{};
    std::size_t k = 0;
    for (std::size_t s = 0; s < 2 * N - 1; ++s) {
      for (std::size_t t = 0; t <= s; ++t) {
        const std::size_t i = s % 2 == 0 ? s - t : t;
        const std::size_t j = s - i;
        if (i < N && j < N) out[k++] = i * N + j;
      }
    }
    return out;
  }();
  return order;
}

const std::array<double, 64>& basis() {
  static const std::array<double, 64> table = [] {
    std::array<double, 64> c{};
    for (std::size_t k = 0; k < N; ++k) {
      const double a = k == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N);
      for (std::size_t x = 0; x < N; ++x) {
        c[k * N + x] = a * std::cos(std::numbers::pi * (2.0 * static_cast<double>(x) + 1.0) * static_cast<double>(k) / (2.0 * N));
      }
    }
    return c;
  }();
  return table;
}

class BitWriter {
 public:
  void put(std::uint64_t value, std::size_t width) {
    for (std::size_t i = width; i-- > 0;) bit((value >> i) & 1u);
  }
  void bit(unsigned b) {
    if (count_ % 8 == 0) bytes_.push_back(0);
    if (b) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (count_ % 8));
    ++count_;
  }
  void unsigned_golomb(std::uint64_t v) {
    const std::uint64_t x = v + 1;
    std::size_t len = 0;
    while ((x >> len) > 1) ++len;
    put(0, len);
    put(x, len + 1);
  }
  void signed_golomb(std::int64_t v) {
    unsigned_golomb(v > 0 ? static_cast<std::uint64_t>(2 * v - 1) : static_cast<std::uint64_t>(-2 * v));
  }
  std::size_t count() const { return count_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t count_ = 0;
};

class BitReader {
 public:
  explicit BitReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  unsigned bit() {
    if (pos_ >= bytes_.size() * 8) throw FormatError("codec stream ended early");
    const unsigned b = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return b;
  }
  std::uint64_t get(std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 1) | bit();
    return v;
  }
  std::uint64_t unsigned_golomb() {
    std::size_t zeros = 0;
    while (bit() == 0) {
      if (++zeros > 62) throw FormatError("codec stream holds an oversized code");
    }
    return ((std::uint64_t{1} << zeros) | get(zeros)) - 1;
  }
  std::int64_t signed_golomb() {
    const std::uint64_t u = unsigned_golomb();
    return u % 2 == 1 ? static_cast<std::int64_t>((u + 1) / 2) : -static_cast<std::int64_t>(u / 2);
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void check_image(const Image& image) {
  if (image.height == 0 || image.width == 0 || image.height >= 4096 || image.width >= 4096 || image.channels == 0 ||
      image.channels > 4 || image.pixels.size() != image.size()) {
    throw BaselineError("codec cannot handle a " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        "x" + std::to_string(image.channels) + " image");
  }
}

// Block at (by, bx) of channel c with edge replication, shifted to [-0.5, 0.5].
std::vector<double> extract_block(const Image& image, std::size_t c, std::size_t by, std::size_t bx) {
  std::vector<double> block(64);
  for (std::size_t y = 0; y < N; ++y) {
    for (std::size_t x = 0; x < N; ++x) {
      const std::size_t iy = std::min(by * N + y, image.height - 1);
      const std::size_t ix = std::min(bx * N + x, image.width - 1);
      block[y * N + x] = image.pixels[(iy * image.width + ix) * image.channels + c] - 0.5;
    }
  }
  return block;
}

}  // namespace

double Codec::min_rate(const Image& image) const {
  const auto r = rates(image);
  if (r.empty()) throw BaselineError("codec offers no rates");
  return *std::min_element(r.begin(), r.end());
}

std::vector<double> dct8x8(const std::vector<double>& block) {
  const auto& c = basis();
  std::array<double, 64> tmp{};
  std::vector<double> out(64, 0.0);
  for (std::size_t u = 0; u < N; ++u)
    for (std::size_t x = 0; x < N; ++x) {
      double s = 0.0;
      for (std::size_t y = 0; y < N; ++y) s += c[u * N + y] * block[y * N + x];
      tmp[u * N + x] = s;
    }
  for (std::size_t u = 0; u < N; ++u)
    for (std::size_t v = 0; v < N; ++v) {
      double s = 0.0;
      for (std::size_t x = 0; x < N; ++x) s += tmp[u * N + x] * c[v * N + x];
      out[u * N + v] = s;
    }
  return out;
}

std::vector<double> idct8x8(const std::vector<double>& coefficients) {
  const auto& c = basis();
  std::array<double, 64> tmp{};
  std::vector<double> out(64, 0.0);
  for (std::size_t y = 0; y < N; ++y)
    for (std::size_t v = 0; v < N; ++v) {
      double s = 0.0;
      for (std::size_t u = 0; u < N; ++u) s += c[u * N + y] * coefficients[u * N + v];
      tmp[y * N + v] = s;
    }
  for (std::size_t y = 0; y < N; ++y)
    for (std::size_t x = 0; x < N; ++x) {
      double s = 0.0;
      for (std::size_t v = 0; v < N; ++v) s += tmp[y * N + v] * c[v * N + x];
      out[y * N + x] = s;
    }
  return out;
}

BlockTransformCodec::BlockTransformCodec(BlockCodecConfig cfg) : cfg_(cfg) {
  if (cfg_.base_coefficients == 0 || cfg_.base_coefficients > 64) {
    throw ConfigError("codec base coefficient count must lie in [1, 64]");
  }
  if (!(cfg_.base_step > 0.0) || !(cfg_.halving_levels > 0.0)) throw ConfigError("codec steps must be positive");
  if (cfg_.base_bits < 2 || cfg_.base_bits > 16) throw ConfigError("codec base code width must lie in [2, 16]");
}

std::size_t BlockTransformCodec::coefficients(std::size_t level) const {
  return std::min<std::size_t>(64, cfg_.base_coefficients + level);
}

double BlockTransformCodec::step(std::size_t level) const {
  return cfg_.base_step * std::exp2(-static_cast<double>(level) / cfg_.halving_levels);
}

Encoded BlockTransformCodec::encode_level(const Image& image, std::size_t level) const {
  check_image(image);
  if (level >= kLevels) throw BaselineError("codec level " + std::to_string(level) + " out of range");
  BitWriter out;
  out.put(image.height, 12);
  out.put(image.width, 12);
  out.put(image.channels - 1, 2);
  out.put(level, 6);
  const std::size_t keep = coefficients(level);
  const double q = step(level);
  const auto& order = zigzag();
  const std::size_t rows = (image.height + N - 1) / N, cols = (image.width + N - 1) / N;
  std::vector<std::int64_t> symbols(keep);
  const std::int64_t half = std::int64_t{1} << (cfg_.base_bits - 1);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t by = 0; by < rows; ++by) {
      for (std::size_t bx = 0; bx < cols; ++bx) {
        const auto coef = dct8x8(extract_block(image, c, by, bx));
        if (level == 0) {
          for (std::size_t k = 0; k < keep; ++k) {
            const auto v = std::clamp<std::int64_t>(std::llround(coef[order[k]] / q), -half, half - 1);
            out.put(static_cast<std::uint64_t>(v + half), cfg_.base_bits);
          }
          continue;
        }
        std::size_t end = 0;
        for (std::size_t k = 0; k < keep; ++k) {
          symbols[k] = static_cast<std::int64_t>(std::llround(coef[order[k]] / q));
          if (symbols[k] != 0) end = k + 1;
        }
        out.unsigned_golomb(end);
        for (std::size_t k = 0; k < end; ++k) out.signed_golomb(symbols[k]);
      }
    }
  }
  Encoded enc;
  enc.bits = out.count();
  enc.rate = static_cast<double>(enc.bits) / static_cast<double>(image.size());
  enc.level = level;
  enc.bitstream = out.take();
  return enc;
}

std::vector<double> BlockTransformCodec::rates(const Image& image) const {
  std::vector<double> out(kLevels);
  for (std::size_t l = 0; l < kLevels; ++l) out[l] = encode_level(image, l).rate;
  return out;
}

Encoded BlockTransformCodec::encode(const Image& image, double target_rate) const {
  const auto r = rates(image);
  std::size_t best = kLevels;
  for (std::size_t l = 0; l < kLevels; ++l) {
    if (r[l] <= target_rate && (best == kLevels || r[l] > r[best])) best = l;
  }
  if (best == kLevels) {
    throw BaselineError("no codec level fits " + std::to_string(target_rate) + " bits per pixel");
  }
  return encode_level(image, best);
}

Image BlockTransformCodec::decode(const std::vector<std::uint8_t>& bitstream) const {
  BitReader in(bitstream);
  Image image;
  image.height = in.get(12);
  image.width = in.get(12);
  image.channels = in.get(2) + 1;
  const std::size_t level = in.get(6);
  if (image.height == 0 || image.width == 0) throw FormatError("codec header holds an empty image");
  image.pixels.assign(image.size(), 0.0);
  const std::size_t keep = coefficients(level);
  const double q = step(level);
  const auto& order = zigzag();
  const std::size_t rows = (image.height + N - 1) / N, cols = (image.width + N - 1) / N;
  const std::int64_t half = std::int64_t{1} << (cfg_.base_bits - 1);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t by = 0; by < rows; ++by) {
      for (std::size_t bx = 0; bx < cols; ++bx) {
        std::vector<double> coef(64, 0.0);
        if (level == 0) {
          for (std::size_t k = 0; k < keep; ++k) {
            coef[order[k]] = static_cast<double>(static_cast<std::int64_t>(in.get(cfg_.base_bits)) - half) * q;
          }
        } else {
          const std::size_t end = in.unsigned_golomb();
          if (end > keep) throw FormatError("codec block holds too many coefficients");
          for (std::size_t k = 0; k < end; ++k) coef[order[k]] = static_cast<double>(in.signed_golomb()) * q;
        }
        const auto block = idct8x8(coef);
        for (std::size_t y = 0; y < N && by * N + y < image.height; ++y) {
          for (std::size_t x = 0; x < N && bx * N + x < image.width; ++x) {
            const std::size_t idx = ((by * N + y) * image.width + bx * N + x) * image.channels + c;
            image.pixels[idx] = std::clamp(block[y * N + x] + 0.5, 0.0, 1.0);
          }
        }
      }
    }
  }
  return image;
}

}  // namespace jscc::codec
