#include "jscc/presets.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "jscc/error.hpp"

namespace jscc::presets {

namespace {

data::ImageBatch read_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                               std::size_t classes) {
  auto batch = data::parse_idx_images(data::read_file(images));
  return data::with_labels(std::move(batch), data::parse_idx_labels(data::read_file(labels)), classes);
}

std::filesystem::path first_existing(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (std::filesystem::exists(dir / n)) return dir / n;
  }
  throw DependencyError("none of the expected files found in " + dir.string() + " (looked for " + *names.begin() + ")");
}

// Shrinks both counts in proportion when the pool is too small.
std::pair<std::size_t, std::size_t> fit_counts(std::size_t available, std::size_t train, std::size_t test) {
  if (train + test <= available) return {train, test};
  const double f = static_cast<double>(available) / static_cast<double>(train + test);
  const auto tr = static_cast<std::size_t>(std::llround(static_cast<double>(train) * f));
  spdlog::info("dataset holds {} images; using {} train / {} test", available, tr, available - tr);
  return {tr, available - tr};
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Dataset split_pool(const data::ImageBatch& pool, const DatasetSpec& spec) {
  const auto [tr, te] = fit_counts(pool.count, spec.train_count, spec.test_count);
  const auto idx = permutation(pool.count, spec.split_seed);
  const std::span<const std::size_t> all(idx);
  return {data::subset(pool, all.first(tr)), data::subset(pool, all.subspan(tr, te))};
}

data::ImageBatch take(const data::ImageBatch& pool, std::size_t count, std::uint64_t seed) {
  const auto idx = permutation(pool.count, seed);
  return data::subset(pool, std::span<const std::size_t>(idx).first(std::min(count, pool.count)));
}

// 28x28 digits padded to 32x32 and averaged down to 8x8; 8x8 input is kept.
data::ImageBatch to_8x8(const data::ImageBatch& batch) {
  if (batch.height == 8 && batch.width == 8) return batch;
  if (batch.height == 28 && batch.width == 28) return data::average_pool(data::pad(batch, 2), 4);
  throw DimensionError("cannot bring " + std::to_string(batch.height) + "x" + std::to_string(batch.width) +
                       " images to 8x8");
}

Dataset mnist_files(const std::filesystem::path& dir, std::size_t classes) {
  Dataset d;
  d.train = read_idx_pair(first_existing(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"}),
                          first_existing(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"}), classes);
  d.test = read_idx_pair(first_existing(dir, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"}),
                         first_existing(dir, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"}), classes);
  return d;
}

}  // namespace

std::filesystem::path bundled_data_dir() {
#ifdef JSCC_DEFAULT_DATA_DIR
  return std::filesystem::path(JSCC_DEFAULT_DATA_DIR);
#else
  return "data";
#endif
}

Dataset load(const DatasetSpec& spec) {
  if (spec.name == "mnist-3class-8x8") {
    const int keep[] = {0, 1, 2};
    if (spec.path.empty()) {
      const auto dir = bundled_data_dir() / "digits8x8";
      auto pool = read_idx_pair(dir / "digits8x8-images.idx3-ubyte", dir / "digits8x8-labels.idx1-ubyte", 10);
      return split_pool(data::select_classes(pool, keep), spec);
    }
    auto files = mnist_files(spec.path, 10);
    Dataset d;
    d.train = take(data::select_classes(to_8x8(files.train), keep), spec.train_count, spec.split_seed);
    d.test = take(data::select_classes(to_8x8(files.test), keep), spec.test_count, spec.split_seed);
    return d;
  }
  if (spec.name == "synthetic-subspace") {
    data::SyntheticSubspaceSpec s;
    s.classes = 3;
    s.ambient_dim = 64;
    s.height = 8;
    s.width = 8;
    s.channels = 1;
    s.subspace_dim = 4;
    s.noise = 0.01;
    s.seed = spec.split_seed;
    s.per_class = (spec.train_count + spec.test_count + s.classes - 1) / s.classes;
    auto synth = data::make_synthetic_subspace(s);
    return split_pool(synth.batch, spec);
  }
  if (spec.name == "mnist") {
    if (spec.path.empty()) throw DependencyError("the mnist preset needs a data path");
    auto files = mnist_files(spec.path, 10);
    Dataset d;
    d.train = take(data::pad(files.train, 2), spec.train_count, spec.split_seed);
    d.test = take(data::pad(files.test, 2), spec.test_count, spec.split_seed);
    return d;
  }
  if (spec.name == "cifar10") {
    if (spec.path.empty()) throw DependencyError("the cifar10 preset needs a data path");
    std::vector<std::uint8_t> train_bytes;
    for (int i = 1; i <= 5; ++i) {
      auto part = data::read_file(spec.path / ("data_batch_" + std::to_string(i) + ".bin"));
      train_bytes.insert(train_bytes.end(), part.begin(), part.end());
    }
    Dataset d;
    d.train = take(data::parse_cifar10(train_bytes), spec.train_count, spec.split_seed);
    d.test = take(data::parse_cifar10(data::read_file(spec.path / "test_batch.bin")), spec.test_count, spec.split_seed);
    return d;
  }
  throw ConfigError("unknown dataset preset '" + spec.name + "'");
}

}  // namespace jscc::presets
