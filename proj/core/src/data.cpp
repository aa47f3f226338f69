#include "jscc/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "jscc/error.hpp"

namespace jscc::data {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void require_header(std::span<const std::uint8_t> bytes, std::size_t header) {
  if (bytes.size() < header) throw LengthError("IDX header truncated", header, bytes.size());
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

}  // namespace

void ImageBatch::validate() const {
  if (pixels.size() != count * pixels_per_image()) {
    throw ContractError("image buffer holds " + std::to_string(pixels.size()) + " values, expected " +
                        std::to_string(count * pixels_per_image()));
  }
  if (!labels.empty() && labels.size() != count) {
    throw ContractError("label count " + std::to_string(labels.size()) + " != image count " +
                        std::to_string(count));
  }
  for (double p : pixels) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("pixel outside [0, 1]: " + std::to_string(p));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ContractError("label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

std::vector<double> MembershipMatrix::dense(std::size_t j) const {
  std::vector<double> out(samples * samples, 0.0);
  for (std::size_t i : members.at(j)) out[i * samples + i] = 1.0;
  return out;
}

IdxContent parse_idx(std::span<const std::uint8_t> bytes) {
  require_header(bytes, 4);
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic == kIdxImageMagic) {
    require_header(bytes, 16);
    ImageBatch batch;
    batch.count = read_be32(bytes, 4);
    batch.height = read_be32(bytes, 8);
    batch.width = read_be32(bytes, 12);
    batch.channels = 1;
    const std::size_t expected = 16 + batch.count * batch.pixels_per_image();
    if (bytes.size() != expected) throw LengthError("IDX image payload", expected, bytes.size());
    batch.pixels.resize(batch.count * batch.pixels_per_image());
    for (std::size_t i = 0; i < batch.pixels.size(); ++i) batch.pixels[i] = bytes[16 + i] / 255.0;
    return batch;
  }
  if (magic == kIdxLabelMagic) {
    require_header(bytes, 8);
    const std::size_t count = read_be32(bytes, 4);
    const std::size_t expected = 8 + count;
    if (bytes.size() != expected) throw LengthError("IDX label payload", expected, bytes.size());
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = bytes[8 + i];
    return labels;
  }
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", magic);
  throw FormatError(std::string("unsupported IDX magic ") + buf);
}

ImageBatch parse_idx_images(std::span<const std::uint8_t> bytes) {
  auto content = parse_idx(bytes);
  if (auto* batch = std::get_if<ImageBatch>(&content)) return std::move(*batch);
  throw FormatError("IDX stream holds labels, expected images");
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  auto content = parse_idx(bytes);
  if (auto* labels = std::get_if<std::vector<int>>(&content)) return std::move(*labels);
  throw FormatError("IDX stream holds images, expected labels");
}

std::vector<std::uint8_t> to_idx_images(const ImageBatch& batch) {
  if (batch.channels != 1) throw FormatError("IDX image streams carry single-channel images");
  std::vector<std::uint8_t> out;
  out.reserve(16 + batch.pixels.size());
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(batch.count));
  write_be32(out, static_cast<std::uint32_t>(batch.height));
  write_be32(out, static_cast<std::uint32_t>(batch.width));
  for (double p : batch.pixels) out.push_back(to_byte(p));
  return out;
}

std::vector<std::uint8_t> to_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

ImageBatch with_labels(ImageBatch batch, std::vector<int> labels, std::size_t classes) {
  if (labels.size() != batch.count) {
    throw LengthError("label file count", batch.count, labels.size());
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw RangeError("label " + std::to_string(l) + " >= class count " + std::to_string(classes));
    }
  }
  batch.labels = std::move(labels);
  batch.classes = classes;
  return batch;
}

ImageBatch parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t records = bytes.size() / kCifarRecordBytes + 1;
    throw LengthError("CIFAR-10 stream is not a whole number of 3073-byte records",
                      records * kCifarRecordBytes, bytes.size());
  }
  ImageBatch batch;
  batch.count = bytes.size() / kCifarRecordBytes;
  batch.height = 32;
  batch.width = 32;
  batch.channels = 3;
  batch.classes = 10;
  batch.pixels.resize(batch.count * 3072);
  batch.labels.resize(batch.count);
  for (std::size_t n = 0; n < batch.count; ++n) {
    const std::uint8_t* rec = bytes.data() + n * kCifarRecordBytes;
    if (rec[0] > 9) throw RangeError("CIFAR-10 label " + std::to_string(rec[0]) + " > 9");
    batch.labels[n] = rec[0];
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 1024; ++p) batch.pixels[n * 3072 + p * 3 + c] = rec[1 + c * 1024 + p] / 255.0;
  }
  return batch;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

SyntheticSubspaceData make_synthetic_subspace(const SyntheticSubspaceSpec& spec) {
  if (spec.classes == 0 || spec.per_class == 0 || spec.subspace_dim == 0) {
    throw ConfigError("synthetic subspace data needs classes, samples and subspace dimension > 0");
  }
  if (spec.subspace_dim > spec.ambient_dim) {
    throw ConfigError("subspace dimension " + std::to_string(spec.subspace_dim) +
                      " exceeds ambient dimension " + std::to_string(spec.ambient_dim));
  }
  std::size_t h = spec.height, w = spec.width, c = spec.channels;
  if (h == 0) {
    h = spec.ambient_dim;
    w = 1;
    c = 1;
  }
  if (h * w * c != spec.ambient_dim) throw ConfigError("image grid does not match ambient dimension");
  if (spec.noise < 0.0) throw ConfigError("noise level must be nonnegative");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto D = static_cast<Eigen::Index>(spec.ambient_dim);
  const auto d = static_cast<Eigen::Index>(spec.subspace_dim);
  const bool orthogonal = spec.classes * spec.subspace_dim <= spec.ambient_dim;

  auto random_orthonormal = [&](Eigen::Index cols) {
    Eigen::MatrixXd g(D, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < D; ++i) g(i, j) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(D, cols));
  };

  SyntheticSubspaceData out;
  std::vector<Eigen::MatrixXd> bases;
  if (orthogonal) {
    Eigen::MatrixXd all = random_orthonormal(static_cast<Eigen::Index>(spec.classes) * d);
    for (std::size_t j = 0; j < spec.classes; ++j) bases.push_back(all.middleCols(static_cast<Eigen::Index>(j) * d, d));
  } else {
    for (std::size_t j = 0; j < spec.classes; ++j) bases.push_back(random_orthonormal(d));
  }
  for (const auto& basis : bases) {
    std::vector<double> flat(spec.ambient_dim * spec.subspace_dim);
    for (Eigen::Index i = 0; i < D; ++i)
      for (Eigen::Index k = 0; k < d; ++k) flat[static_cast<std::size_t>(i * d + k)] = basis(i, k);
    out.bases.push_back(std::move(flat));
  }

  const std::size_t n = spec.classes * spec.per_class;
  out.raw.resize(n * spec.ambient_dim);
  out.batch.labels.resize(n);
  for (std::size_t j = 0; j < spec.classes; ++j) {
    for (std::size_t s = 0; s < spec.per_class; ++s) {
      const std::size_t idx = j * spec.per_class + s;
      Eigen::VectorXd coef(d);
      for (Eigen::Index k = 0; k < d; ++k) coef(k) = gauss(rng);
      Eigen::VectorXd x = bases[j] * coef;
      for (Eigen::Index i = 0; i < D; ++i) {
        double v = x(i);
        if (spec.noise > 0.0) v += spec.noise * gauss(rng);
        out.raw[idx * spec.ambient_dim + static_cast<std::size_t>(i)] = v;
      }
      out.batch.labels[idx] = static_cast<int>(j);
    }
  }
  const auto [lo, hi] = std::minmax_element(out.raw.begin(), out.raw.end());
  const double span = *hi - *lo;
  out.scale = span > 0.0 ? 1.0 / span : 1.0;
  out.offset = -*lo * out.scale;
  out.batch.pixels.resize(out.raw.size());
  for (std::size_t i = 0; i < out.raw.size(); ++i) {
    out.batch.pixels[i] = std::clamp(out.raw[i] * out.scale + out.offset, 0.0, 1.0);
  }
  out.batch.count = n;
  out.batch.height = h;
  out.batch.width = w;
  out.batch.channels = c;
  out.batch.classes = spec.classes;
  return out;
}

MembershipMatrix build_membership(std::span<const int> labels, std::size_t classes) {
  MembershipMatrix pi;
  pi.samples = labels.size();
  pi.members.resize(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw RangeError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    pi.members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return pi;
}

std::vector<int> corrupt_labels(std::span<const int> labels, std::size_t classes,
                                const CorruptionConfig& cfg) {
  if (!(cfg.lcr >= 0.0 && cfg.lcr <= 1.0)) {
    throw ConfigError("label corruption rate must lie in [0, 1], got " + std::to_string(cfg.lcr));
  }
  std::vector<int> out(labels.begin(), labels.end());
  const auto flips = static_cast<std::size_t>(std::floor(cfg.lcr * static_cast<double>(labels.size())));
  if (flips == 0) return out;
  if (classes < 2) throw ConfigError("label corruption needs at least two classes");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> shift(1, classes - 1);
  for (std::size_t k = 0; k < flips; ++k) {
    const std::size_t i = order[k];
    out[i] = static_cast<int>((static_cast<std::size_t>(out[i]) + shift(rng)) % classes);
  }
  return out;
}

ImageBatch pad(const ImageBatch& batch, std::size_t border) {
  ImageBatch out = batch;
  out.height = batch.height + 2 * border;
  out.width = batch.width + 2 * border;
  out.pixels.assign(out.count * out.pixels_per_image(), 0.0);
  const std::size_t c = batch.channels;
  for (std::size_t n = 0; n < batch.count; ++n)
    for (std::size_t y = 0; y < batch.height; ++y)
      for (std::size_t x = 0; x < batch.width; ++x)
        for (std::size_t k = 0; k < c; ++k)
          out.pixels[((n * out.height + y + border) * out.width + x + border) * c + k] =
              batch.pixels[((n * batch.height + y) * batch.width + x) * c + k];
  return out;
}

ImageBatch average_pool(const ImageBatch& batch, std::size_t factor) {
  if (factor == 0 || batch.height % factor != 0 || batch.width % factor != 0) {
    throw ConfigError("pool factor " + std::to_string(factor) + " does not divide " +
                      std::to_string(batch.height) + "x" + std::to_string(batch.width));
  }
  ImageBatch out = batch;
  out.height = batch.height / factor;
  out.width = batch.width / factor;
  out.pixels.assign(out.count * out.pixels_per_image(), 0.0);
  const std::size_t c = batch.channels;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t n = 0; n < batch.count; ++n)
    for (std::size_t y = 0; y < batch.height; ++y)
      for (std::size_t x = 0; x < batch.width; ++x)
        for (std::size_t k = 0; k < c; ++k)
          out.pixels[((n * out.height + y / factor) * out.width + x / factor) * c + k] +=
              inv * batch.pixels[((n * batch.height + y) * batch.width + x) * c + k];
  return out;
}

ImageBatch select_classes(const ImageBatch& batch, std::span<const int> keep) {
  std::vector<std::size_t> index;
  std::vector<int> relabel;
  for (std::size_t i = 0; i < batch.count; ++i) {
    auto it = std::find(keep.begin(), keep.end(), batch.labels.at(i));
    if (it != keep.end()) {
      index.push_back(i);
      relabel.push_back(static_cast<int>(it - keep.begin()));
    }
  }
  ImageBatch out = subset(batch, index);
  out.labels = std::move(relabel);
  out.classes = keep.size();
  return out;
}

ImageBatch subset(const ImageBatch& batch, std::span<const std::size_t> index) {
  ImageBatch out = batch;
  out.count = index.size();
  out.pixels.resize(out.count * batch.pixels_per_image());
  out.labels.clear();
  const std::size_t b = batch.pixels_per_image();
  for (std::size_t k = 0; k < index.size(); ++k) {
    std::copy_n(batch.pixels.begin() + static_cast<std::ptrdiff_t>(index[k] * b), b,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(k * b));
    if (!batch.labels.empty()) out.labels.push_back(batch.labels[index[k]]);
  }
  return out;
}

}  // namespace jscc::data
