#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jscc/channel.hpp"
#include "jscc/classifier.hpp"
#include "jscc/data.hpp"
#include "jscc/models.hpp"
#include "jscc/objectives.hpp"
#include "jscc/optim.hpp"

namespace jscc::trainer {

enum class SigmaSampling { linear, decibel };
enum class Discretization { verbatim, corrected };

/// Midpoint of the k-bin grid over [lo, hi] that sigma2 falls into:
///   (hi - lo)/(2k) + ((hi - lo)/k) * floor(sigma2 * k / (hi - lo)),
/// clamped to the top midpoint. The corrected variant measures sigma2 from lo
/// and returns lo plus that value, i.e. the midpoint of the bin of [lo, hi]
/// holding sigma2. Inputs outside [lo, hi] are clamped and logged.
double discretize_sigma(double sigma2, double lo, double hi, std::size_t k,
                        Discretization mode = Discretization::verbatim);

struct TrainConfig {
  optim::AdamConfig adam;
  std::size_t batch_size = 2048;
  std::size_t epochs = 10;
  /// Fixed-SNR training point.
  double snr_db = 10.0;
  /// Domain-randomization range for gated training.
  double snr_min_db = -3.0;
  double snr_max_db = 21.0;
  std::uint64_t seed = 0;
  objectives::RateParams rate;
  channel::ChannelSpec channel;
  /// Drop the channel layer from the graph (features pass through unchanged).
  bool noiseless = false;
  SigmaSampling sampling = SigmaSampling::linear;
  Discretization discretization = Discretization::verbatim;
  /// Weight of the mean relaxed mask added to the gated loss.
  double gate_cost = 0.0;
  /// Record training-set accuracy at the end of every epoch.
  bool track_accuracy = true;

  void validate() const;
  double sigma2_min() const;
  double sigma2_max() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double rate_reduction = 0.0;
  double mse = 0.0;
  double accuracy = 0.0;
  double activated_ratio = 1.0;
};

struct History {
  std::vector<EpochRecord> epochs;

  /// Header "epoch,loss,rate_reduction,mse,accuracy,activated_ratio".
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Encoder, decoder and optional gate sharing one parameter store.
struct System {
  models::NetworkConfig network;
  std::optional<models::GateConfig> gate_config;
  models::DecoderOutput output = models::DecoderOutput::image;
  std::size_t classes = 0;
  models::ParameterStore store;
  std::unique_ptr<models::Encoder> encoder;
  std::unique_ptr<models::Decoder> decoder;
  std::unique_ptr<models::GateNet> gate;

  static System create(const models::NetworkConfig& network, std::uint64_t seed,
                       const models::GateConfig* gate = nullptr,
                       models::DecoderOutput output = models::DecoderOutput::image, std::size_t classes = 0);
  bool gated() const { return static_cast<bool>(gate); }
};

/// Fixed-SNR end-to-end training on the unified loss.
History train_jscc(System& system, const data::ImageBatch& train, const TrainConfig& cfg);
/// Gated training with one randomized noise power per step.
History train_gated(System& system, const data::ImageBatch& train, const TrainConfig& cfg);
/// Softmax cross-entropy through the same channel; the decoder must output J probabilities.
History train_cross_entropy_baseline(System& system, const data::ImageBatch& train, const TrainConfig& cfg);

struct EvalConfig {
  channel::ChannelSpec channel;
  double snr_db = 10.0;
  std::uint64_t seed = 0;
  bool noiseless = false;
  std::size_t batch_size = 512;
};

/// Every stage of one pass over a dataset, one row per image.
struct Transmission {
  Eigen::MatrixXd transmitted;  // power-normalized encoder output
  Eigen::MatrixXd received;     // equalized channel output
  Eigen::MatrixXd output;       // reconstructed pixels or class probabilities
  std::vector<double> activated_ratio;
};

Transmission transmit_dataset(System& system, const data::ImageBatch& images, const EvalConfig& cfg);

struct EvalResult {
  double psnr = 0.0;
  double ssim = 0.0;
  double accuracy = 0.0;
  double activated_ratio = 1.0;
};

/// Mean per-image PSNR and SSIM, nearest-subspace accuracy on received
/// features (or argmax accuracy for a classifying decoder) and mean
/// activated ratio. `subspaces` may be null for a classifying decoder.
EvalResult evaluate(System& system, const data::ImageBatch& test, const EvalConfig& cfg,
                    const classifier::SubspaceModel* subspaces);

/// Subspaces fitted on received training features.
classifier::SubspaceModel fit_received(System& system, const data::ImageBatch& train, const EvalConfig& cfg,
                                       const classifier::SubspacePolicy& policy = {});

/// Labels predicted from received features.
std::vector<int> predict(System& system, const data::ImageBatch& images, const EvalConfig& cfg,
                         const classifier::SubspaceModel* subspaces);

}  // namespace jscc::trainer
