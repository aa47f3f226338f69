#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "jscc/classifier.hpp"
#include "jscc/codec.hpp"
#include "jscc/models.hpp"
#include "jscc/presets.hpp"
#include "jscc/trainer.hpp"

namespace jscc::config {

/// Everything one experiment run needs. Defaults are the full-scale settings;
/// configs/toy.cfg holds the desk-scale overrides.
struct ExperimentSpec {
  presets::DatasetSpec dataset;
  models::NetworkConfig network;
  trainer::TrainConfig train;
  bool gated = false;
  models::GateConfig gate;
  classifier::SubspacePolicy subspace;
  std::vector<double> snr_grid;
  std::vector<double> lcr_grid = {0.0, 0.1, 0.3, 0.5};
  std::vector<std::uint64_t> seeds = {0};
  /// Label-corruption study: the rate-reduction side trains with this beta and epoch count.
  double corrupt_beta = 0.0;
  std::size_t corrupt_epochs = 50;
  codec::BlockCodecConfig codec;
  double compression_ratio = 0.316;
  /// Checkpoint read by the eval run.
  std::filesystem::path checkpoint;

  ExperimentSpec();

  /// Normalized "key = value" text covering every key; parsing it gives back this spec.
  std::string snapshot() const;
  /// Text of the keys that fix parameter shapes; checkpoints are stamped with its hash.
  std::string architecture() const;
  /// Throws ValidationError listing every failing key.
  void validate() const;
};

/// "a:step:b" (inclusive range), "a,b,c" or a single value. Accepts U+2212 as a minus sign.
std::vector<double> parse_grid(std::string_view text);

/// Parses "key = value" lines ('#' starts a comment). Unknown keys and
/// unparsable values are collected and reported in one ValidationError.
ExperimentSpec parse(std::string_view text);
ExperimentSpec load(const std::filesystem::path& path);

}  // namespace jscc::config
