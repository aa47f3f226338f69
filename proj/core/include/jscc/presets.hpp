#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "jscc/data.hpp"

namespace jscc::presets {

struct DatasetSpec {
  /// "mnist-3class-8x8", "synthetic-subspace", "mnist" or "cifar10".
  std::string name = "mnist-3class-8x8";
  /// Directory with the raw files; empty selects the bundled data where one exists.
  std::filesystem::path path;
  std::size_t train_count = 1500;
  std::size_t test_count = 300;
  std::uint64_t split_seed = 0;
};

struct Dataset {
  data::ImageBatch train;
  data::ImageBatch test;
};

/// Directory of the bundled 8x8 digit images.
std::filesystem::path bundled_data_dir();

/// Loads and preprocesses a dataset preset. When fewer images exist than
/// train_count + test_count, both counts shrink in proportion.
Dataset load(const DatasetSpec& spec);

}  // namespace jscc::presets
