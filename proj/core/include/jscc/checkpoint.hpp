#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jscc/classifier.hpp"
#include "jscc/models.hpp"

namespace jscc::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct Block {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint64_t fingerprint = 0;
  std::vector<Block> blocks;

  const Block* find(std::string_view name) const;
};

/// 64-bit FNV-1a hash of a configuration text.
std::uint64_t fingerprint(std::string_view text);

/// "JSCK", u32 version, u64 fingerprint, u64 block count, then per block:
/// u32 name length, name, u32 rank, u64 extents, f64 values. Little endian.
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CheckpointError when the stored fingerprint differs from `expected`.
Checkpoint load(const std::filesystem::path& path, std::uint64_t expected);

void add_parameters(Checkpoint& ckpt, const models::ParameterStore& store);
/// Copies every store entry from its same-named block; shapes must match.
void restore_parameters(const Checkpoint& ckpt, models::ParameterStore& store);

/// Blocks nsc.<j>.mean and nsc.<j>.basis.
void add_subspaces(Checkpoint& ckpt, const classifier::SubspaceModel& model);
classifier::SubspaceModel read_subspaces(const Checkpoint& ckpt);

}  // namespace jscc::checkpoint
