#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "jscc/config.hpp"

namespace jscc::experiments {

enum class Kind { train, eval, sweep, corrupt_study, sscc_compare };

Kind parse_kind(const std::string& name);
std::string to_string(Kind kind);

/// One line of results.csv. `model` is jscc, gated, fixed, sscc, rate-reduction or cross-entropy.
struct ResultRow {
  std::string model;
  double snr_db = 0.0;
  std::string channel;
  double psnr = 0.0;
  double ssim = 0.0;
  double accuracy = 0.0;
  double activated_ratio = 1.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kResultsHeader = "model,snr_db,channel,psnr,ssim,accuracy,activated_ratio,seed";

std::string csv_line(const ResultRow& row);

/// Appends rows to a CSV file, flushing each one so a failed run keeps what it finished.
class ResultsWriter {
 public:
  ResultsWriter(const std::filesystem::path& path, const std::string& header);
  void write(const std::string& line);

 private:
  std::ofstream out_;
};

struct CorruptionRow {
  double lcr = 0.0;
  std::uint64_t seed = 0;
  double rate_reduction_accuracy = 0.0;
  double cross_entropy_accuracy = 0.0;
};

inline constexpr const char* kCorruptionHeader = "lcr,seed,rate_reduction_accuracy,cross_entropy_accuracy";

/// Runs one experiment into `out`: config.cfg (normalized snapshot), results.csv,
/// per-metric SVG plots, checkpoints/ and run.log. Errors are logged and
/// rethrown; everything written before the failure stays on disk.
void run(Kind kind, const config::ExperimentSpec& spec, const std::filesystem::path& out);

/// Averages rows over seeds and writes one SVG per metric, one line per model.
void write_plots(std::span<const ResultRow> rows, const std::filesystem::path& out);

}  // namespace jscc::experiments
