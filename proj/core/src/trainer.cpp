#include "jscc/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "jscc/error.hpp"
#include "jscc/metrics.hpp"

namespace jscc::trainer {

namespace {

enum class Mode { jscc, gated, cross_entropy };

// Independent, reproducible generator per (seed, purpose).
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kShuffleStream = 1;
constexpr std::uint32_t kChannelStream = 2;
constexpr std::uint32_t kSigmaStream = 3;
constexpr std::uint32_t kEvalStream = 4;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ad::Tensor batch_images(const data::ImageBatch& d, std::span<const std::size_t> idx) {
  const std::size_t per = d.pixels_per_image();
  std::vector<double> v(idx.size() * per);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto img = d.image(idx[r]);
    std::copy(img.begin(), img.end(), v.begin() + static_cast<std::ptrdiff_t>(r * per));
  }
  return ad::Tensor::constant({idx.size(), per}, std::move(v));
}

std::vector<int> batch_labels(const data::ImageBatch& d, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = d.labels.at(idx[r]);
  return out;
}

Eigen::MatrixXd to_matrix(const ad::Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.value().data(), static_cast<Eigen::Index>(t.dim(0)),
                                     static_cast<Eigen::Index>(t.dim(1)));
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_data(const System& system, const data::ImageBatch& d) {
  if (d.pixels_per_image() != system.network.pixels()) {
    throw DimensionError("dataset images have " + std::to_string(d.pixels_per_image()) + " pixels, model expects " +
                         std::to_string(system.network.pixels()));
  }
  if (d.labels.size() != d.count) throw ContractError("dataset has no labels");
}

// Shared mini-batch loop for the three training procedures.
class Loop {
 public:
  Loop(System& system, const data::ImageBatch& train, const TrainConfig& cfg, Mode mode)
      : sys_(system), train_(train), cfg_(cfg), mode_(mode),
        shuffle_(stream(cfg.seed, kShuffleStream)),
        channel_rng_(stream(cfg.seed, kChannelStream)),
        sigma_rng_(stream(cfg.seed, kSigmaStream)) {}

  History run() {
    cfg_.validate();
    check_data(sys_, train_);
    if (train_.count == 0) throw ContractError("training set is empty");
    std::vector<ad::Tensor> params;
    for (const auto& e : sys_.store.entries()) {
      if (e.trainable && (mode_ == Mode::gated || !e.name.starts_with("gate."))) params.push_back(e.tensor);
    }
    optim::Adam adam(params, cfg_.adam);
    last_good_ = sys_.store.snapshot();
    History history;
    std::vector<std::size_t> order(train_.count);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::min(cfg_.batch_size, train_.count);
    for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_);
      EpochRecord rec;
      rec.epoch = epoch;
      std::size_t steps = 0;
      double ratio_sum = 0.0;
      for (std::size_t start = 0; start < train_.count; start += batch) {
        const std::span<const std::size_t> idx(order.data() + start, std::min(batch, train_.count - start));
        // A lone trailing sample carries no class structure.
        if (idx.size() < 2 && steps > 0) break;
        StepResult step = forward(idx);
        if (!std::isfinite(step.loss.item())) diverge("non-finite loss", step_count_);
        adam.zero_grad();
        ad::backward(step.loss);
        adam.step();
        if (mode_ == Mode::gated) sys_.gate->clamp_weights();
        if (!all_finite(sys_.store.snapshot())) diverge("non-finite parameters", step_count_);
        last_good_ = sys_.store.snapshot();
        ++step_count_;
        ++steps;
        rec.loss += step.loss.item();
        rec.rate_reduction += step.rate_reduction;
        rec.mse += step.mse;
        ratio_sum += step.ratio;
      }
      const double s = static_cast<double>(std::max<std::size_t>(steps, 1));
      rec.loss /= s;
      rec.rate_reduction /= s;
      rec.mse /= s;
      rec.activated_ratio = ratio_sum / s;
      rec.accuracy = cfg_.track_accuracy ? train_accuracy() : std::numeric_limits<double>::quiet_NaN();
      spdlog::info("epoch {} loss {:.6f} rate_reduction {:.6f} mse {:.6f} accuracy {:.4f} activated {:.4f}", epoch,
                   rec.loss, rec.rate_reduction, rec.mse, rec.accuracy, rec.activated_ratio);
      history.epochs.push_back(rec);
    }
    return history;
  }

 private:
  struct StepResult {
    ad::Tensor loss;
    double rate_reduction = 0.0;
    double mse = 0.0;
    double ratio = 1.0;
  };

  [[noreturn]] void diverge(const std::string& what, std::size_t step) {
    sys_.store.restore(last_good_);
    throw DivergenceError(what + " at step " + std::to_string(step) + "; parameters rolled back", step);
  }

  StepResult forward(std::span<const std::size_t> idx) {
    const std::size_t n = idx.size();
    const std::size_t width = sys_.network.feature_dim, b = width / 2;
    ad::Tensor images = batch_images(train_, idx);
    const auto labels = batch_labels(train_, idx);
    StepResult out;

    ad::Tensor transmitted;
    ad::Tensor mask;
    std::vector<channel::ChannelRealization> rows;
    rows.reserve(n);
    if (mode_ == Mode::gated) {
      const double sigma2 = sample_sigma2();
      const double lo = cfg_.sigma2_min(), hi = cfg_.sigma2_max();
      const double tilde = discretize_sigma(sigma2, lo, hi, sys_.gate->config().bins, cfg_.discretization);
      mask = sys_.gate->relaxed_mask(tilde);
      out.ratio = sys_.gate->forward(tilde).ratio();
      ad::Tensor features = sys_.encoder->gated_forward(images, mask, true);
      const double symbols = ad::sum(mask).item() / 2.0;
      transmitted = channel::graph::normalize_power(features, ad::Tensor::full({n, 1}, symbols));
      for (std::size_t r = 0; r < n; ++r) rows.push_back(channel::draw_awgn_noise_power(sigma2, b, channel_rng_));
    } else {
      transmitted = channel::graph::normalize_power(sys_.encoder->forward(images, true));
      for (std::size_t r = 0; r < n; ++r) {
        rows.push_back(channel::draw_channel_guarded(cfg_.channel, cfg_.snr_db, b, channel_rng_));
      }
    }

    ad::Tensor received = transmitted;
    if (!cfg_.noiseless) {
      std::vector<double> scale;
      if (mask.defined()) {
        scale.resize(n * width);
        auto mv = mask.value();
        for (std::size_t r = 0; r < n; ++r) std::copy(mv.begin(), mv.end(), scale.begin() + static_cast<std::ptrdiff_t>(r * width));
      }
      received = channel::graph::transmit_equalize(transmitted, rows, scale);
    }

    if (mode_ == Mode::cross_entropy) {
      ad::Tensor probs = sys_.decoder->forward(received, true);
      out.loss = objectives::cross_entropy(probs, objectives::one_hot(labels, sys_.classes));
      return out;
    }
    const auto pi = data::build_membership(labels, train_.classes);
    ad::Tensor recon = sys_.decoder->forward(received, true);
    auto loss = objectives::unified_loss(received, pi, images, recon, cfg_.rate);
    out.loss = loss.total;
    if (mode_ == Mode::gated && cfg_.gate_cost > 0.0) {
      out.loss = ad::add(out.loss, ad::scale(ad::mean(mask), cfg_.gate_cost));
    }
    out.rate_reduction = loss.rate_reduction.item();
    out.mse = loss.mse.item();
    return out;
  }

  double sample_sigma2() {
    if (cfg_.sampling == SigmaSampling::linear) {
      return std::uniform_real_distribution<double>(cfg_.sigma2_min(), cfg_.sigma2_max())(sigma_rng_);
    }
    const double snr = std::uniform_real_distribution<double>(cfg_.snr_min_db, cfg_.snr_max_db)(sigma_rng_);
    return channel::noise_power_from_snr(snr);
  }

  double train_accuracy() {
    EvalConfig eval;
    eval.channel = cfg_.channel;
    eval.snr_db = cfg_.snr_db;
    eval.seed = cfg_.seed;
    eval.noiseless = cfg_.noiseless;
    if (mode_ == Mode::cross_entropy) {
      return metrics::accuracy(predict(sys_, train_, eval, nullptr), train_.labels);
    }
    const auto model = fit_received(sys_, train_, eval);
    return metrics::accuracy(predict(sys_, train_, eval, &model), train_.labels);
  }

  System& sys_;
  const data::ImageBatch& train_;
  const TrainConfig& cfg_;
  Mode mode_;
  std::mt19937_64 shuffle_;
  std::mt19937_64 channel_rng_;
  std::mt19937_64 sigma_rng_;
  std::vector<double> last_good_;
  std::size_t step_count_ = 0;
};

}  // namespace

double discretize_sigma(double sigma2, double lo, double hi, std::size_t k, Discretization mode) {
  if (!(lo < hi)) throw ConfigError("discretization range must satisfy min < max");
  if (k == 0) throw ConfigError("discretization needs at least one bin");
  if (sigma2 < lo || sigma2 > hi) {
    spdlog::debug("noise power {} outside [{}, {}], clamped", sigma2, lo, hi);
    sigma2 = std::clamp(sigma2, lo, hi);
  }
  const double width = hi - lo;
  const double kd = static_cast<double>(k);
  // The corrected grid is shifted by lo so its points are the bin midpoints of [lo, hi].
  const double offset = mode == Discretization::verbatim ? 0.0 : lo;
  const double bin = std::floor((sigma2 - offset) * kd / width);
  const double top = width / (2.0 * kd) + (width / kd) * (kd - 1.0);
  return offset + std::min(width / (2.0 * kd) + (width / kd) * bin, top);
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(adam.learning_rate > 0.0)) problems.push_back("learning_rate must be positive");
  if (batch_size == 0) problems.push_back("batch_size must be positive");
  if (!(snr_min_db < snr_max_db)) problems.push_back("SNR range must be nonempty");
  if (!std::isfinite(snr_db)) problems.push_back("snr_db must be finite");
  if (gate_cost < 0.0) problems.push_back("gate_cost must be nonnegative");
  if (!problems.empty()) throw ValidationError(problems);
  rate.validate();
}

double TrainConfig::sigma2_min() const { return channel::noise_power_from_snr(snr_max_db); }
double TrainConfig::sigma2_max() const { return channel::noise_power_from_snr(snr_min_db); }

std::string History::csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,loss,rate_reduction,mse,accuracy,activated_ratio\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.rate_reduction << ',' << e.mse << ',' << e.accuracy << ','
        << e.activated_ratio << '\n';
  }
  return out.str();
}

void History::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << csv();
}

System System::create(const models::NetworkConfig& network, std::uint64_t seed, const models::GateConfig* gate,
                      models::DecoderOutput output, std::size_t classes) {
  System sys;
  sys.network = network;
  sys.output = output;
  sys.classes = classes;
  std::mt19937_64 init(seed);
  sys.encoder = std::make_unique<models::Encoder>(network, sys.store, init);
  sys.decoder = std::make_unique<models::Decoder>(network, sys.store, init, output, classes);
  if (gate) {
    sys.gate_config = *gate;
    sys.gate = std::make_unique<models::GateNet>(*gate, network.feature_dim, sys.store, init);
  }
  return sys;
}

History train_jscc(System& system, const data::ImageBatch& train, const TrainConfig& cfg) {
  if (system.output != models::DecoderOutput::image) throw ConfigError("train_jscc needs an image decoder");
  return Loop(system, train, cfg, Mode::jscc).run();
}

History train_gated(System& system, const data::ImageBatch& train, const TrainConfig& cfg) {
  if (!system.gated()) throw ConfigError("train_gated needs a gate");
  if (system.output != models::DecoderOutput::image) throw ConfigError("train_gated needs an image decoder");
  return Loop(system, train, cfg, Mode::gated).run();
}

History train_cross_entropy_baseline(System& system, const data::ImageBatch& train, const TrainConfig& cfg) {
  if (system.output != models::DecoderOutput::class_probabilities) {
    throw ConfigError("the cross-entropy baseline needs a classifying decoder");
  }
  if (system.classes != train.classes) {
    throw ConfigError("decoder predicts " + std::to_string(system.classes) + " classes, data has " +
                      std::to_string(train.classes));
  }
  return Loop(system, train, cfg, Mode::cross_entropy).run();
}

Transmission transmit_dataset(System& system, const data::ImageBatch& images, const EvalConfig& cfg) {
  if (images.pixels_per_image() != system.network.pixels()) {
    throw DimensionError("dataset images do not match the model input");
  }
  const std::size_t n = images.count, width = system.network.feature_dim, b = width / 2;
  Transmission out;
  out.transmitted.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  out.received.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  out.output.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(system.decoder->output_dim()));
  out.activated_ratio.assign(n, 1.0);
  auto rng = stream(cfg.seed, kEvalStream);
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    ad::Tensor x = batch_images(images, idx);
    std::vector<channel::ChannelRealization> rows;
    for (std::size_t r = 0; r < count; ++r) {
      rows.push_back(cfg.noiseless ? channel::identity_channel(b) : channel::draw_channel(cfg.channel, cfg.snr_db, b, rng));
    }
    ad::Tensor transmitted;
    std::vector<double> scale;
    if (system.gated()) {
      std::vector<double> mask(count * width), symbols(count);
      for (std::size_t r = 0; r < count; ++r) {
        const double sigma2 = cfg.noiseless ? channel::noise_power_from_snr(cfg.snr_db) : rows[r].equivalent_noise_power();
        const auto state = system.gate->forward(sigma2);
        std::copy(state.mask.begin(), state.mask.end(), mask.begin() + static_cast<std::ptrdiff_t>(r * width));
        symbols[r] = static_cast<double>(state.active) / 2.0;
        out.activated_ratio[start + r] = state.ratio();
      }
      ad::Tensor m = ad::Tensor::constant({count, width}, mask);
      transmitted = channel::graph::normalize_power(system.encoder->gated_forward(x, m, false),
                                                    ad::Tensor::constant({count, 1}, std::move(symbols)));
      scale = std::move(mask);
    } else {
      transmitted = channel::graph::normalize_power(system.encoder->forward(x, false));
    }
    ad::Tensor received = cfg.noiseless ? transmitted : channel::graph::transmit_equalize(transmitted, rows, scale);
    ad::Tensor output = system.decoder->forward(received, false);
    const auto s = static_cast<Eigen::Index>(start), c = static_cast<Eigen::Index>(count);
    out.transmitted.middleRows(s, c) = to_matrix(transmitted);
    out.received.middleRows(s, c) = to_matrix(received);
    out.output.middleRows(s, c) = to_matrix(output);
  }
  return out;
}

std::vector<int> predict(System& system, const data::ImageBatch& images, const EvalConfig& cfg,
                         const classifier::SubspaceModel* subspaces) {
  const auto t = transmit_dataset(system, images, cfg);
  if (system.output == models::DecoderOutput::class_probabilities) {
    std::vector<int> out(images.count);
    for (Eigen::Index i = 0; i < t.output.rows(); ++i) {
      Eigen::Index best = 0;
      t.output.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }
  if (!subspaces) throw DependencyError("predict: no fitted subspace model");
  return classifier::classify_rows(*subspaces, t.received);
}

classifier::SubspaceModel fit_received(System& system, const data::ImageBatch& train, const EvalConfig& cfg,
                                       const classifier::SubspacePolicy& policy) {
  const auto t = transmit_dataset(system, train, cfg);
  return classifier::fit_subspaces(t.received, train.labels, train.classes, policy);
}

EvalResult evaluate(System& system, const data::ImageBatch& test, const EvalConfig& cfg,
                    const classifier::SubspaceModel* subspaces) {
  const auto t = transmit_dataset(system, test, cfg);
  EvalResult r;
  const double n = static_cast<double>(std::max<std::size_t>(test.count, 1));
  r.activated_ratio = std::accumulate(t.activated_ratio.begin(), t.activated_ratio.end(), 0.0) / n;
  if (system.output == models::DecoderOutput::class_probabilities) {
    r.psnr = r.ssim = std::numeric_limits<double>::quiet_NaN();
    std::vector<int> pred(test.count);
    for (Eigen::Index i = 0; i < t.output.rows(); ++i) {
      Eigen::Index best = 0;
      t.output.row(i).maxCoeff(&best);
      pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    r.accuracy = metrics::accuracy(pred, test.labels);
    return r;
  }
  const RowMatrix recon = t.output;
  const std::size_t per = test.pixels_per_image();
  for (std::size_t i = 0; i < test.count; ++i) {
    std::span<const double> rec(recon.data() + i * per, per);
    r.psnr += metrics::psnr(test.image(i), rec);
    r.ssim += objectives::ssim(test.image(i), rec);
  }
  r.psnr /= n;
  r.ssim /= n;
  r.accuracy = subspaces ? metrics::accuracy(classifier::classify_rows(*subspaces, t.received), test.labels)
                         : std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace jscc::trainer
