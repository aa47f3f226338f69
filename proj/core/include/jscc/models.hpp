#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jscc/autodiff.hpp"

namespace jscc::models {

/// Named tensors in registration order. Trainable entries are parameters;
/// the rest are buffers (e.g. frozen standardization statistics).
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    ad::Tensor tensor;
    bool trainable = true;
  };

  ad::Tensor add(const std::string& name, ad::Shape shape, std::vector<double> values,
                 bool trainable = true);
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::span<const Entry> entries() const { return entries_; }
  std::vector<ad::Tensor> trainable(const std::string& prefix = "") const;
  void zero_grad();

  /// All values (parameters and buffers) concatenated in registration order.
  std::vector<double> snapshot() const;
  void restore(std::span<const double> values);
  std::size_t parameter_count() const;

 private:
  std::vector<Entry> entries_;
};

enum class Activation { none, relu, lrelu, tanh, sigmoid };
ad::Tensor activate(const ad::Tensor& x, Activation act, double slope = 0.2);

struct Linear {
  ad::Tensor weight;  // [in x out]
  ad::Tensor bias;    // [1 x out]
  ad::Tensor forward(const ad::Tensor& x) const;
};

struct Standardize {
  ad::Tensor gamma;
  ad::Tensor beta;
  ad::Tensor running_mean;  // buffers
  ad::Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  ad::Tensor forward(const ad::Tensor& x, bool training);
};

struct Conv {
  ad::Tensor weight;
  ad::Tensor bias;  // [1 x out x 1 x 1]
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool transposed = false;
  ad::Tensor forward(const ad::Tensor& x) const;
};

/// Shapes shared by encoder and decoder.
struct NetworkConfig {
  /// "desk-mlp", "conv-mnist" or "residual-cifar".
  std::string preset = "desk-mlp";
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 1;
  /// Real feature dimension 2b; must be even.
  std::size_t feature_dim = 40;
  /// desk-mlp hidden widths, encoder order (the decoder mirrors them).
  std::vector<std::size_t> hidden = {256};
  /// Channel multiplier for the convolutional presets (1.0 = full width).
  double width_scale = 1.0;
  double lrelu_slope = 0.2;

  std::size_t pixels() const { return height * width * channels; }
  void validate() const;
  static NetworkConfig conv_mnist();
  static NetworkConfig residual_cifar();
};

class Encoder {
 public:
  Encoder(const NetworkConfig& cfg, ParameterStore& store, std::mt19937_64& init,
          const std::string& prefix = "enc.");

  /// Output of the penultimate layer for [N x B] images in [0, 1].
  ad::Tensor penultimate(const ad::Tensor& images, bool training);
  /// Encoded features [N x 2b].
  ad::Tensor forward(const ad::Tensor& images, bool training);
  /// mask o (W_normalized applied to the penultimate output); no bias. `mask`
  /// is [1 x 2b] or [N x 2b].
  ad::Tensor gated_forward(const ad::Tensor& images, const ad::Tensor& mask, bool training);

  const Linear& head() const { return head_; }
  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  std::vector<Linear> dense_;
  std::vector<Conv> conv_;
  std::vector<Standardize> norm_;
  std::vector<Conv> skip_;
  Linear head_;
};

enum class DecoderOutput { image, class_probabilities };

class Decoder {
 public:
  Decoder(const NetworkConfig& cfg, ParameterStore& store, std::mt19937_64& init,
          DecoderOutput output = DecoderOutput::image, std::size_t classes = 0,
          const std::string& prefix = "dec.");

  /// [N x 2b] features -> [N x B] images in [0, 1], or [N x J] probabilities.
  ad::Tensor forward(const ad::Tensor& features, bool training);
  DecoderOutput output() const { return output_; }
  std::size_t output_dim() const;

 private:
  NetworkConfig cfg_;
  DecoderOutput output_;
  std::size_t classes_;
  std::vector<Linear> dense_;
  std::vector<Conv> conv_;
  std::vector<Standardize> norm_;
};

struct GateConfig {
  std::vector<std::size_t> hidden = {32};
  Activation hidden_activation = Activation::relu;
  Activation head_activation = Activation::sigmoid;
  /// When false the last hidden layer's output is the score vector (no head).
  bool use_head = true;
  double threshold = 0.5;
  double temperature = 0.1;
  std::size_t min_active = 1;
  double sigma2_min = 0.0;
  double sigma2_max = 1.0;
  std::size_t bins = 8;

  void validate() const;
};

struct GateState {
  std::vector<double> scores;
  std::vector<double> mask;  // 0 or 1
  std::size_t active = 0;
  double ratio() const {
    return mask.empty() ? 0.0 : static_cast<double>(active) / static_cast<double>(mask.size());
  }
};

/// Monotone gate: nonnegative weights and nondecreasing activations map
/// sigma^2 to per-feature scores.
class GateNet {
 public:
  GateNet(const GateConfig& cfg, std::size_t feature_dim, ParameterStore& store,
          std::mt19937_64& init, const std::string& prefix = "gate.");

  /// Scores [K x 2b] for K noise powers; inputs are rescaled to [0, 1] over
  /// [sigma2_min, sigma2_max] and clamped (with a log line) when outside.
  ad::Tensor scores(std::span<const double> sigma2) const;
  /// Hard mask with min-active enforcement.
  GateState forward(double sigma2) const;
  /// sigmoid((g - threshold) / temperature) as a [1 x 2b] tensor.
  ad::Tensor relaxed_mask(double sigma2) const;

  /// Sets every negative weight to zero; biases are left alone.
  void clamp_weights();

  const GateConfig& config() const { return cfg_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  GateConfig cfg_;
  std::size_t feature_dim_;
  std::vector<Linear> layers_;
};

/// Hard mask from raw scores: g_i > threshold, then the top-scoring entries
/// are switched on until `min_active` are active (ties to lower index).
GateState threshold_scores(std::vector<double> scores, double threshold, std::size_t min_active);

/// Columns of a [in x out] weight scaled to unit Euclidean norm (one column per
/// output unit). Throws NormalizationError on a zero column.
ad::Tensor normalize_columns(const ad::Tensor& weight);

/// Images of a batch as an [N x B] constant tensor.
ad::Tensor image_tensor(std::span<const double> pixels, std::size_t count, std::size_t per_image);

}  // namespace jscc::models
