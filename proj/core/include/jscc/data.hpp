#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace jscc::data {

/// N images stored row-major as [N x height x width x channels], pixels in [0, 1].
struct ImageBatch {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t pixels_per_image() const { return height * width * channels; }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(pixels).subspan(i * pixels_per_image(), pixels_per_image());
  }
  /// Throws ContractError when any invariant (pixel range, label range,
  /// buffer sizes) is broken.
  void validate() const;
};

/// Class membership as J index sets; the diagonal matrices are implicit.
struct MembershipMatrix {
  std::size_t samples = 0;
  std::vector<std::vector<std::size_t>> members;

  std::size_t classes() const { return members.size(); }
  std::size_t trace(std::size_t j) const { return members.at(j).size(); }
  /// Dense N x N diagonal indicator for class j (tests and diagnostics).
  std::vector<double> dense(std::size_t j) const;
};

struct CorruptionConfig {
  double lcr = 0.0;
  std::uint64_t seed = 0;
};

using IdxContent = std::variant<ImageBatch, std::vector<int>>;

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Parses an IDX stream: images (0x803, pixels scaled by 1/255, C = 1) or labels (0x801).
IdxContent parse_idx(std::span<const std::uint8_t> bytes);
ImageBatch parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> to_idx_images(const ImageBatch& batch);
std::vector<std::uint8_t> to_idx_labels(std::span<const int> labels);

/// Attaches labels to an image batch; counts must match and labels be < classes.
ImageBatch with_labels(ImageBatch batch, std::vector<int> labels, std::size_t classes);

/// CIFAR-10 binary records: 1 label byte + 3072 channel-planar pixel bytes.
ImageBatch parse_cifar10(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

struct SyntheticSubspaceSpec {
  std::size_t classes = 3;
  std::size_t per_class = 100;
  std::size_t ambient_dim = 64;
  std::size_t subspace_dim = 4;
  double noise = 0.0;
  std::uint64_t seed = 0;
  /// Image grid; height * width * channels must equal ambient_dim. Zero
  /// height means (ambient_dim, 1, 1).
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
};

struct SyntheticSubspaceData {
  ImageBatch batch;
  /// Samples before the affine map into [0, 1]: pixel = raw * scale + offset.
  std::vector<double> raw;
  double scale = 1.0;
  double offset = 0.0;
  /// Orthonormal class bases, ambient_dim x subspace_dim row-major each.
  std::vector<std::vector<double>> bases;
};

SyntheticSubspaceData make_synthetic_subspace(const SyntheticSubspaceSpec& spec);

MembershipMatrix build_membership(std::span<const int> labels, std::size_t classes);

/// Moves exactly floor(lcr * N) uniformly chosen labels to a uniformly chosen
/// different class.
std::vector<int> corrupt_labels(std::span<const int> labels, std::size_t classes,
                                const CorruptionConfig& cfg);

// Preprocessing used by the dataset presets.
ImageBatch pad(const ImageBatch& batch, std::size_t border);
ImageBatch average_pool(const ImageBatch& batch, std::size_t factor);
/// Keeps only the listed classes and relabels them 0..k-1 in list order.
ImageBatch select_classes(const ImageBatch& batch, std::span<const int> keep);
ImageBatch subset(const ImageBatch& batch, std::span<const std::size_t> index);

}  // namespace jscc::data
