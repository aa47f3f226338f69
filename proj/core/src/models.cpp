#include "jscc/models.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "jscc/error.hpp"

namespace jscc::models {

namespace {

std::vector<double> kaiming(std::size_t count, std::size_t fan_in, std::mt19937_64& rng,
                            double slope = 0.0) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  std::vector<double> v(count);
  for (auto& x : v) x = normal(rng);
  return v;
}

Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                   std::mt19937_64& rng, double slope) {
  Linear l;
  l.weight = store.add(name + ".weight", {in, out}, kaiming(in * out, in, rng, slope));
  l.bias = store.add(name + ".bias", {1, out}, std::vector<double>(out, 0.0));
  return l;
}

Conv make_conv(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::size_t kernel, std::size_t stride, std::size_t padding, bool transposed,
               std::mt19937_64& rng, double slope) {
  Conv c;
  c.stride = stride;
  c.padding = padding;
  c.transposed = transposed;
  const ad::Shape shape = transposed ? ad::Shape{in, out, kernel, kernel} : ad::Shape{out, in, kernel, kernel};
  c.weight = store.add(name + ".weight", shape, kaiming(in * out * kernel * kernel, in * kernel * kernel, rng, slope));
  c.bias = store.add(name + ".bias", {1, out, 1, 1}, std::vector<double>(out, 0.0));
  return c;
}

Standardize make_norm(ParameterStore& store, const std::string& name, std::size_t features) {
  Standardize s;
  s.gamma = store.add(name + ".gamma", {features}, std::vector<double>(features, 1.0));
  s.beta = store.add(name + ".beta", {features}, std::vector<double>(features, 0.0));
  s.running_mean = store.add(name + ".running_mean", {features}, std::vector<double>(features, 0.0), false);
  s.running_var = store.add(name + ".running_var", {features}, std::vector<double>(features, 1.0), false);
  return s;
}

std::size_t scaled(std::size_t channels, double factor) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(channels) * factor)));
}

// Conv channel widths of the three down-sampling stages.
std::array<std::size_t, 3> stage_widths(const NetworkConfig& cfg) {
  return {scaled(64, cfg.width_scale), scaled(128, cfg.width_scale), scaled(256, cfg.width_scale)};
}

// Permutation taking a flat [N x H x W x C] buffer to [N x C x H x W] (or back when `inverse`).
std::vector<std::size_t> layout_index(std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                                      bool to_planar) {
  std::vector<std::size_t> index(n * h * w * c);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t interleaved = ((s * h + y) * w + x) * c + k;
          const std::size_t planar = ((s * c + k) * h + y) * w + x;
          if (to_planar) {
            index[planar] = interleaved;
          } else {
            index[interleaved] = planar;
          }
        }
  return index;
}

ad::Tensor to_planar(const ad::Tensor& images, const NetworkConfig& cfg) {
  const std::size_t n = images.dim(0);
  if (cfg.channels == 1) return ad::reshape(images, {n, 1, cfg.height, cfg.width});
  return ad::take(images, layout_index(n, cfg.height, cfg.width, cfg.channels, true),
                  {n, cfg.channels, cfg.height, cfg.width});
}

ad::Tensor to_interleaved(const ad::Tensor& planar, const NetworkConfig& cfg) {
  const std::size_t n = planar.dim(0);
  if (cfg.channels == 1) return ad::reshape(planar, {n, cfg.pixels()});
  return ad::take(planar, layout_index(n, cfg.height, cfg.width, cfg.channels, false), {n, cfg.pixels()});
}

void require_images(const ad::Tensor& images, const NetworkConfig& cfg) {
  if (images.rank() != 2 || images.dim(1) != cfg.pixels()) {
    throw DimensionError("encoder expects [N x " + std::to_string(cfg.pixels()) + "] images, got " +
                         ad::to_string(images.shape()));
  }
}

}  // namespace

ad::Tensor ParameterStore::add(const std::string& name, ad::Shape shape, std::vector<double> values,
                               bool trainable) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  ad::Tensor t = trainable ? ad::Tensor::parameter(std::move(shape), std::move(values))
                           : ad::Tensor::constant(std::move(shape), std::move(values));
  entries_.push_back({name, t, trainable});
  return t;
}

const ad::Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("no parameter named " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::vector<ad::Tensor> ParameterStore::trainable(const std::string& prefix) const {
  std::vector<ad::Tensor> out;
  for (const auto& e : entries_) {
    if (e.trainable && e.name.starts_with(prefix)) out.push_back(e.tensor);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<double> ParameterStore::snapshot() const {
  std::vector<double> out;
  for (const auto& e : entries_) {
    auto v = e.tensor.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void ParameterStore::restore(std::span<const double> values) {
  std::size_t offset = 0;
  for (auto& e : entries_) {
    auto dst = e.tensor.mutable_value();
    if (offset + dst.size() > values.size()) break;
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
  if (offset != values.size() || offset != parameter_count()) {
    throw ContractError("snapshot holds " + std::to_string(values.size()) + " values, store holds " +
                        std::to_string(parameter_count()));
  }
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

ad::Tensor activate(const ad::Tensor& x, Activation act, double slope) {
  switch (act) {
    case Activation::none: return x;
    case Activation::relu: return ad::relu(x);
    case Activation::lrelu: return ad::lrelu(x, slope);
    case Activation::tanh: return ad::tanh(x);
    case Activation::sigmoid: return ad::sigmoid(x);
  }
  return x;
}

ad::Tensor Linear::forward(const ad::Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }

ad::Tensor Standardize::forward(const ad::Tensor& x, bool training) {
  if (!training) {
    ad::FeatureStats frozen;
    auto m = running_mean.value();
    auto v = running_var.value();
    frozen.mean.assign(m.begin(), m.end());
    frozen.var.assign(v.begin(), v.end());
    return ad::standardize(x, gamma, beta, eps, &frozen, nullptr);
  }
  ad::FeatureStats batch;
  ad::Tensor out = ad::standardize(x, gamma, beta, eps, nullptr, &batch);
  auto m = running_mean.mutable_value();
  auto v = running_var.mutable_value();
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = (1.0 - momentum) * m[i] + momentum * batch.mean[i];
    v[i] = (1.0 - momentum) * v[i] + momentum * batch.var[i];
  }
  return out;
}

ad::Tensor Conv::forward(const ad::Tensor& x) const {
  ad::Tensor y = transposed ? ad::conv_transpose2d(x, weight, stride, padding) : ad::conv2d(x, weight, stride, padding);
  return ad::add(y, bias);
}

void NetworkConfig::validate() const {
  std::vector<std::string> problems;
  if (feature_dim == 0 || feature_dim % 2 != 0) problems.push_back("feature_dim must be a positive even number");
  if (height == 0 || width == 0 || channels == 0) problems.push_back("image shape must be nonzero");
  if (!(width_scale > 0.0)) problems.push_back("width_scale must be positive");
  if (preset == "desk-mlp") {
    if (std::find(hidden.begin(), hidden.end(), 0u) != hidden.end()) problems.push_back("hidden widths must be nonzero");
  } else if (preset == "conv-mnist" || preset == "residual-cifar") {
    if (height % 8 != 0 || width % 8 != 0) problems.push_back(preset + " needs height and width divisible by 8");
  } else {
    problems.push_back("unknown model preset '" + preset + "'");
  }
  if (!problems.empty()) throw ValidationError(problems);
}

NetworkConfig NetworkConfig::conv_mnist() {
  NetworkConfig cfg;
  cfg.preset = "conv-mnist";
  cfg.height = 32;
  cfg.width = 32;
  cfg.channels = 1;
  cfg.feature_dim = 648;
  return cfg;
}

NetworkConfig NetworkConfig::residual_cifar() {
  NetworkConfig cfg;
  cfg.preset = "residual-cifar";
  cfg.height = 32;
  cfg.width = 32;
  cfg.channels = 3;
  cfg.feature_dim = 700;
  return cfg;
}

Encoder::Encoder(const NetworkConfig& cfg, ParameterStore& store, std::mt19937_64& init,
                 const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const double slope = cfg_.lrelu_slope;
  std::size_t flat = 0;
  if (cfg_.preset == "desk-mlp") {
    std::size_t in = cfg_.pixels();
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
      dense_.push_back(make_linear(store, prefix + "fc" + std::to_string(i), in, cfg_.hidden[i], init, slope));
      in = cfg_.hidden[i];
    }
    flat = in;
  } else {
    const auto widths = stage_widths(cfg_);
    std::size_t in = cfg_.channels;
    const bool residual = cfg_.preset == "residual-cifar";
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string name = prefix + "stage" + std::to_string(i);
      if (residual) {
        conv_.push_back(make_conv(store, name + ".conv_a", in, widths[i], 3, 2, 1, false, init, slope));
        norm_.push_back(make_norm(store, name + ".norm_a", widths[i]));
        conv_.push_back(make_conv(store, name + ".conv_b", widths[i], widths[i], 3, 1, 1, false, init, slope));
        norm_.push_back(make_norm(store, name + ".norm_b", widths[i]));
        skip_.push_back(make_conv(store, name + ".skip", in, widths[i], 1, 2, 0, false, init, 1.0));
      } else {
        conv_.push_back(make_conv(store, name + ".conv", in, widths[i], 4, 2, 1, false, init, slope));
        if (i > 0) norm_.push_back(make_norm(store, name + ".norm", widths[i]));
      }
      in = widths[i];
    }
    flat = in * (cfg_.height / 8) * (cfg_.width / 8);
  }
  head_ = make_linear(store, prefix + "head", flat, cfg_.feature_dim, init, 1.0);
}

ad::Tensor Encoder::penultimate(const ad::Tensor& images, bool training) {
  require_images(images, cfg_);
  ad::Tensor x = ad::add_scalar(ad::scale(images, 2.0), -1.0);
  const double slope = cfg_.lrelu_slope;
  if (cfg_.preset == "desk-mlp") {
    for (const auto& layer : dense_) x = ad::lrelu(layer.forward(x), slope);
    return x;
  }
  x = to_planar(x, cfg_);
  if (cfg_.preset == "residual-cifar") {
    for (std::size_t i = 0; i < skip_.size(); ++i) {
      ad::Tensor main = ad::lrelu(norm_[2 * i].forward(conv_[2 * i].forward(x), training), slope);
      main = norm_[2 * i + 1].forward(conv_[2 * i + 1].forward(main), training);
      x = ad::lrelu(ad::add(main, skip_[i].forward(x)), slope);
    }
  } else {
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      x = conv_[i].forward(x);
      if (i > 0) x = norm_[i - 1].forward(x, training);
      x = ad::lrelu(x, slope);
    }
  }
  return ad::reshape(x, {x.dim(0), x.size() / x.dim(0)});
}

ad::Tensor Encoder::forward(const ad::Tensor& images, bool training) {
  return head_.forward(penultimate(images, training));
}

ad::Tensor Encoder::gated_forward(const ad::Tensor& images, const ad::Tensor& mask, bool training) {
  ad::Tensor features = ad::matmul(penultimate(images, training), normalize_columns(head_.weight));
  return ad::mul(features, mask);
}

Decoder::Decoder(const NetworkConfig& cfg, ParameterStore& store, std::mt19937_64& init,
                 DecoderOutput output, std::size_t classes, const std::string& prefix)
    : cfg_(cfg), output_(output), classes_(classes) {
  cfg_.validate();
  if (output_ == DecoderOutput::class_probabilities && classes_ < 2) {
    throw ConfigError("a classifying decoder needs at least two classes");
  }
  const double slope = cfg_.lrelu_slope;
  if (cfg_.preset == "desk-mlp" || output_ == DecoderOutput::class_probabilities) {
    std::vector<std::size_t> widths(cfg_.hidden.rbegin(), cfg_.hidden.rend());
    if (cfg_.preset != "desk-mlp") widths = {256};
    std::size_t in = cfg_.feature_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      dense_.push_back(make_linear(store, prefix + "fc" + std::to_string(i), in, widths[i], init, slope));
      in = widths[i];
    }
    dense_.push_back(make_linear(store, prefix + "out", in, output_dim(), init, 1.0));
    return;
  }
  const auto widths = stage_widths(cfg_);
  const std::size_t cells = (cfg_.height / 8) * (cfg_.width / 8);
  dense_.push_back(make_linear(store, prefix + "project", cfg_.feature_dim, widths[2] * cells, init, 0.0));
  norm_.push_back(make_norm(store, prefix + "norm0", widths[2]));
  conv_.push_back(make_conv(store, prefix + "up0", widths[2], widths[1], 4, 2, 1, true, init, 0.0));
  norm_.push_back(make_norm(store, prefix + "norm1", widths[1]));
  conv_.push_back(make_conv(store, prefix + "up1", widths[1], widths[0], 4, 2, 1, true, init, 0.0));
  norm_.push_back(make_norm(store, prefix + "norm2", widths[0]));
  conv_.push_back(make_conv(store, prefix + "up2", widths[0], cfg_.channels, 4, 2, 1, true, init, 1.0));
}

std::size_t Decoder::output_dim() const {
  return output_ == DecoderOutput::image ? cfg_.pixels() : classes_;
}

ad::Tensor Decoder::forward(const ad::Tensor& features, bool training) {
  if (features.rank() != 2 || features.dim(1) != cfg_.feature_dim) {
    throw DimensionError("decoder expects [N x " + std::to_string(cfg_.feature_dim) + "] features, got " +
                         ad::to_string(features.shape()));
  }
  const double slope = cfg_.lrelu_slope;
  ad::Tensor x = features;
  if (conv_.empty()) {
    for (std::size_t i = 0; i + 1 < dense_.size(); ++i) x = ad::lrelu(dense_[i].forward(x), slope);
    x = dense_.back().forward(x);
    if (output_ == DecoderOutput::class_probabilities) return ad::softmax(x);
  } else {
    const std::size_t n = x.dim(0);
    x = ad::reshape(dense_[0].forward(x), {n, norm_[0].gamma.size(), cfg_.height / 8, cfg_.width / 8});
    x = ad::relu(norm_[0].forward(x, training));
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      x = conv_[i].forward(x);
      if (i + 1 < conv_.size()) x = ad::relu(norm_[i + 1].forward(x, training));
    }
    x = to_interleaved(x, cfg_);
  }
  // tanh output mapped from [-1, 1] to [0, 1]
  return ad::add_scalar(ad::scale(ad::tanh(x), 0.5), 0.5);
}

void GateConfig::validate() const {
  std::vector<std::string> problems;
  if (!(threshold > 0.0 && threshold < 1.0) && head_activation == Activation::sigmoid) {
    problems.push_back("gate_threshold must lie in (0, 1) under a sigmoid head");
  }
  if (!(temperature > 0.0)) problems.push_back("gate_temperature must be positive");
  if (!(sigma2_min < sigma2_max)) problems.push_back("gate sigma2_min must be below sigma2_max");
  if (sigma2_min < 0.0) problems.push_back("gate sigma2_min must be nonnegative");
  if (bins < 1) problems.push_back("gate_bins must be at least 1");
  if (!use_head && hidden.empty()) problems.push_back("a gate without head needs a hidden layer");
  if (!problems.empty()) throw ValidationError(problems);
}

GateNet::GateNet(const GateConfig& cfg, std::size_t feature_dim, ParameterStore& store,
                 std::mt19937_64& init, const std::string& prefix)
    : cfg_(cfg), feature_dim_(feature_dim) {
  cfg_.validate();
  if (!cfg_.use_head && cfg_.hidden.back() != feature_dim_) {
    throw ConfigError("gate without head: last hidden width must equal the feature dimension");
  }
  std::vector<std::size_t> widths = cfg_.hidden;
  if (cfg_.use_head) widths.push_back(feature_dim_);
  std::size_t in = 1;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    // Half-normal weights keep the monotone gate inside its constraint set from the start.
    std::vector<double> w = kaiming(in * widths[i], in, init);
    for (auto& x : w) x = std::abs(x);
    const bool head = cfg_.use_head && i + 1 == widths.size();
    const std::string name = prefix + (head ? std::string("head") : "fc" + std::to_string(i));
    Linear l;
    l.weight = store.add(name + ".weight", {in, widths[i]}, std::move(w));
    l.bias = store.add(name + ".bias", {1, widths[i]}, std::vector<double>(widths[i], 0.0));
    layers_.push_back(l);
    in = widths[i];
  }
}

ad::Tensor GateNet::scores(std::span<const double> sigma2) const {
  std::vector<double> u(sigma2.size());
  const double span = cfg_.sigma2_max - cfg_.sigma2_min;
  for (std::size_t i = 0; i < sigma2.size(); ++i) {
    if (sigma2[i] < 0.0) throw RangeError("noise power must be nonnegative");
    double v = (sigma2[i] - cfg_.sigma2_min) / span;
    if (v < 0.0 || v > 1.0) {
      spdlog::debug("gate input {} outside [{}, {}], clamped", sigma2[i], cfg_.sigma2_min, cfg_.sigma2_max);
      v = std::clamp(v, 0.0, 1.0);
    }
    u[i] = v;
  }
  ad::Tensor x = ad::Tensor::constant({sigma2.size(), 1}, std::move(u));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool head = cfg_.use_head && i + 1 == layers_.size();
    x = activate(layers_[i].forward(x), head ? cfg_.head_activation : cfg_.hidden_activation);
  }
  return x;
}

GateState GateNet::forward(double sigma2) const {
  const double in[] = {sigma2};
  const auto out = scores(in);
  const auto s = out.value();
  return threshold_scores(std::vector<double>(s.begin(), s.end()), cfg_.threshold, cfg_.min_active);
}

ad::Tensor GateNet::relaxed_mask(double sigma2) const {
  const double in[] = {sigma2};
  return ad::sigmoid(ad::scale(ad::add_scalar(scores(in), -cfg_.threshold), 1.0 / cfg_.temperature));
}

void GateNet::clamp_weights() {
  for (auto& layer : layers_) {
    for (auto& w : layer.weight.mutable_value()) w = std::max(w, 0.0);
  }
}

GateState threshold_scores(std::vector<double> scores, double threshold, std::size_t min_active) {
  GateState state;
  state.mask.assign(scores.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > threshold) {
      state.mask[i] = 1.0;
      ++state.active;
    }
  }
  if (state.active < min_active) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t i : order) {
      if (state.active >= min_active) break;
      if (state.mask[i] == 0.0) {
        state.mask[i] = 1.0;
        ++state.active;
      }
    }
  }
  state.scores = std::move(scores);
  return state;
}

ad::Tensor normalize_columns(const ad::Tensor& weight) {
  if (weight.rank() != 2) throw DimensionError("normalize_columns expects a matrix");
  ad::Tensor norms = ad::sqrt(ad::sum(ad::square(weight), 0));
  for (double v : norms.value()) {
    if (!(v > 0.0)) throw NormalizationError("last-layer weight has a zero output row");
  }
  return ad::div(weight, norms);
}

ad::Tensor image_tensor(std::span<const double> pixels, std::size_t count, std::size_t per_image) {
  if (pixels.size() != count * per_image) {
    throw DimensionError("image buffer holds " + std::to_string(pixels.size()) + " values, expected " +
                         std::to_string(count * per_image));
  }
  return ad::Tensor::constant({count, per_image}, std::vector<double>(pixels.begin(), pixels.end()));
}

}  // namespace jscc::models
