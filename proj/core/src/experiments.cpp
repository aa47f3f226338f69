#include "jscc/experiments.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "jscc/checkpoint.hpp"
#include "jscc/error.hpp"
#include "jscc/metrics.hpp"
#include "jscc/objectives.hpp"
#include "jscc/plot.hpp"
#include "jscc/sscc.hpp"

namespace jscc::experiments {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvalSeedOffset = 100;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_number(double v) { return std::isnan(v) ? "nan" : fmt::format("{}", v); }

class Runner {
 public:
  Runner(const config::ExperimentSpec& spec, const fs::path& out)
      : spec_(spec), out_(out), dataset_(presets::load(spec.dataset)) {
    network_ = spec_.network;
    network_.height = dataset_.train.height;
    network_.width = dataset_.train.width;
    network_.channels = dataset_.train.channels;
    network_.validate();
    fs::create_directories(out_ / "checkpoints");
  }

  std::vector<ResultRow> rows;

  void train() {
    ResultsWriter csv(out_ / "results.csv", kResultsHeader);
    for (std::uint64_t seed : spec_.seeds) {
      trainer::System sys = make_system(seed, spec_.gated);
      const auto history = fit(sys, seed, spec_.train.snr_db);
      history.write_csv(out_ / fmt::format("history_seed{}.csv", seed));
      const auto ev = eval_config(spec_.train.snr_db, seed);
      const auto subspaces = trainer::fit_received(sys, dataset_.train, ev, spec_.subspace);
      save(sys, subspaces, out_ / "checkpoints" / fmt::format("seed{}.jsck", seed));
      emit(csv, row(spec_.gated ? "gated" : "jscc", sys, ev, subspaces, seed));
    }
  }

  void eval() {
    if (spec_.checkpoint.empty()) throw ConfigError("eval needs a checkpoint (config key 'checkpoint')");
    const auto ckpt = checkpoint::load(spec_.checkpoint, checkpoint::fingerprint(spec_.architecture()));
    trainer::System sys = make_system(0, spec_.gated);
    checkpoint::restore_parameters(ckpt, sys.store);
    const auto stored = checkpoint::read_subspaces(ckpt);
    ResultsWriter csv(out_ / "results.csv", kResultsHeader);
    for (std::uint64_t seed : spec_.seeds) {
      for (double snr : spec_.snr_grid) {
        const auto ev = eval_config(snr, seed);
        const auto subspaces = spec_.gated ? trainer::fit_received(sys, dataset_.train, ev, spec_.subspace) : stored;
        emit(csv, row(spec_.gated ? "gated" : "jscc", sys, ev, subspaces, seed));
      }
    }
  }

  void sweep() {
    ResultsWriter csv(out_ / "results.csv", kResultsHeader);
    for (std::uint64_t seed : spec_.seeds) {
      trainer::System sys = make_system(seed, spec_.gated);
      fit(sys, seed, spec_.train.snr_db).write_csv(out_ / fmt::format("history_seed{}.csv", seed));
      const auto trained = trainer::fit_received(sys, dataset_.train, eval_config(spec_.train.snr_db, seed), spec_.subspace);
      save(sys, trained, out_ / "checkpoints" / fmt::format("seed{}.jsck", seed));
      for (double snr : spec_.snr_grid) {
        const auto ev = eval_config(snr, seed);
        if (spec_.gated) {
          emit(csv, row("gated", sys, ev, trainer::fit_received(sys, dataset_.train, ev, spec_.subspace), seed));
          trainer::System fixed = make_system(seed, false);
          fit(fixed, seed, snr);
          emit(csv, row("fixed", fixed, ev, trainer::fit_received(fixed, dataset_.train, ev, spec_.subspace), seed));
        } else {
          emit(csv, row("jscc", sys, ev, trained, seed));
        }
      }
    }
  }

  void corrupt_study() {
    ResultsWriter csv(out_ / "corruption.csv", kCorruptionHeader);
    std::map<std::string, plot::Series> series = {{"rate-reduction", {"rate-reduction", {}, {}}},
                                                  {"cross-entropy", {"cross-entropy", {}, {}}}};
    for (double lcr : spec_.lcr_grid) {
      double rr_sum = 0.0, ce_sum = 0.0;
      for (std::uint64_t seed : spec_.seeds) {
        data::ImageBatch noisy = dataset_.train;
        noisy.labels = data::corrupt_labels(dataset_.train.labels, dataset_.train.classes, {lcr, seed});
        trainer::TrainConfig cfg = train_config(seed, spec_.train.snr_db);
        cfg.epochs = spec_.corrupt_epochs;
        cfg.track_accuracy = false;
        const auto ev = eval_config(spec_.train.snr_db, seed);

        trainer::TrainConfig rr_cfg = cfg;
        rr_cfg.rate.beta = spec_.corrupt_beta;
        trainer::System rr = make_system(seed, false);
        trainer::train_jscc(rr, noisy, rr_cfg);
        const auto subspaces = trainer::fit_received(rr, noisy, ev, spec_.subspace);
        const double rr_acc = trainer::evaluate(rr, dataset_.test, ev, &subspaces).accuracy;

        trainer::System ce = trainer::System::create(network_, seed, nullptr, models::DecoderOutput::class_probabilities,
                                                     dataset_.train.classes);
        trainer::train_cross_entropy_baseline(ce, noisy, cfg);
        const double ce_acc = trainer::evaluate(ce, dataset_.test, ev, nullptr).accuracy;

        csv.write(fmt::format("{},{},{},{}", csv_number(lcr), seed, csv_number(rr_acc), csv_number(ce_acc)));
        spdlog::info("lcr {} seed {}: rate-reduction {:.4f} cross-entropy {:.4f}", lcr, seed, rr_acc, ce_acc);
        rr_sum += rr_acc;
        ce_sum += ce_acc;
      }
      const double n = static_cast<double>(spec_.seeds.size());
      series["rate-reduction"].x.push_back(lcr);
      series["rate-reduction"].y.push_back(rr_sum / n);
      series["cross-entropy"].x.push_back(lcr);
      series["cross-entropy"].y.push_back(ce_sum / n);
    }
    plot::write_svg(out_ / "accuracy_vs_lcr.svg",
                    {"Test accuracy under label corruption", "label corruption rate", "accuracy",
                     {series["rate-reduction"], series["cross-entropy"]}});
  }

  void sscc_compare() {
    ResultsWriter csv(out_ / "results.csv", kResultsHeader);
    {
      std::ofstream meta(out_ / "metadata.txt");
      meta << "sscc_classifier = encoder trained at the evaluation SNR, noiseless pass, subspaces fitted on its "
              "noiseless training features\n";
      meta << "compression_ratio = " << spec_.compression_ratio << '\n';
    }
    const codec::BlockTransformCodec codec(spec_.codec);
    const sscc::SsccConfig sscc_cfg{spec_.compression_ratio, &codec};
    sscc_cfg.validate();
    const std::string channel = channel::to_string(spec_.train.channel.model);
    for (std::uint64_t seed : spec_.seeds) {
      for (double snr : spec_.snr_grid) {
        trainer::System sys = make_system(seed, false);
        fit(sys, seed, snr);
        const auto ev = eval_config(snr, seed);
        emit(csv, row("jscc", sys, ev, trainer::fit_received(sys, dataset_.train, ev, spec_.subspace), seed));

        auto clean = ev;
        clean.noiseless = true;
        const auto subspaces = trainer::fit_received(sys, dataset_.train, clean, spec_.subspace);
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 7u};
        std::mt19937_64 rng(seq);
        const auto& test = dataset_.test;
        double psnr = 0.0, ssim = 0.0;
        std::size_t correct = 0, delivered = 0;
        for (std::size_t i = 0; i < test.count; ++i) {
          const auto px = test.image(i);
          const codec::Image image{test.height, test.width, test.channels, {px.begin(), px.end()}};
          const auto res = sscc::sscc_transmit(image, snr, sscc_cfg, rng);
          psnr += metrics::psnr(px, res.image.pixels);
          ssim += objectives::ssim(px, res.image.pixels);
          delivered += res.delivered ? 1 : 0;
          correct += sscc::sscc_classify(res.image, sys.encoder.get(), &subspaces) == test.labels[i] ? 1 : 0;
        }
        const double n = static_cast<double>(test.count);
        spdlog::info("sscc snr {} seed {}: delivered {}/{}", snr, seed, delivered, test.count);
        emit(csv, {"sscc", snr, channel, psnr / n, ssim / n, static_cast<double>(correct) / n, kNaN, seed});
      }
    }
  }

 private:
  trainer::System make_system(std::uint64_t seed, bool gated) const {
    return trainer::System::create(network_, seed, gated ? &spec_.gate : nullptr);
  }

  trainer::TrainConfig train_config(std::uint64_t seed, double snr) const {
    trainer::TrainConfig cfg = spec_.train;
    cfg.seed = seed;
    cfg.snr_db = snr;
    return cfg;
  }

  trainer::History fit(trainer::System& sys, std::uint64_t seed, double snr) const {
    const auto cfg = train_config(seed, snr);
    spdlog::info("training {} model, seed {}, {} dB", sys.gated() ? "gated" : "fixed", seed, snr);
    return sys.gated() ? trainer::train_gated(sys, dataset_.train, cfg) : trainer::train_jscc(sys, dataset_.train, cfg);
  }

  trainer::EvalConfig eval_config(double snr, std::uint64_t seed) const {
    trainer::EvalConfig ev;
    ev.channel = spec_.train.channel;
    ev.snr_db = snr;
    ev.seed = seed + kEvalSeedOffset;
    ev.noiseless = spec_.train.noiseless;
    return ev;
  }

  ResultRow row(const std::string& model, trainer::System& sys, const trainer::EvalConfig& ev,
                const classifier::SubspaceModel& subspaces, std::uint64_t seed) const {
    const auto r = trainer::evaluate(sys, dataset_.test, ev, &subspaces);
    return {model, ev.snr_db, channel::to_string(ev.channel.model), r.psnr, r.ssim, r.accuracy, r.activated_ratio, seed};
  }

  void save(const trainer::System& sys, const classifier::SubspaceModel& subspaces, const fs::path& path) const {
    checkpoint::Checkpoint ckpt;
    ckpt.fingerprint = checkpoint::fingerprint(spec_.architecture());
    checkpoint::add_parameters(ckpt, sys.store);
    checkpoint::add_subspaces(ckpt, subspaces);
    checkpoint::save(path, ckpt);
  }

  void emit(ResultsWriter& csv, const ResultRow& r) {
    csv.write(csv_line(r));
    rows.push_back(r);
    spdlog::info("{} snr {} seed {}: psnr {:.3f} ssim {:.4f} accuracy {:.4f} activated {:.3f}", r.model, r.snr_db,
                 r.seed, r.psnr, r.ssim, r.accuracy, r.activated_ratio);
  }

  const config::ExperimentSpec& spec_;
  fs::path out_;
  presets::Dataset dataset_;
  models::NetworkConfig network_;
};

// Routes library logging to the console and out/run.log for the lifetime of a run.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : previous_(spdlog::default_logger()) {
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(path.string(), true);
    auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
    logger_ = std::make_shared<spdlog::logger>("run", spdlog::sinks_init_list{console, file});
    logger_->set_level(previous_->level());
    logger_->flush_on(spdlog::level::info);
    spdlog::set_default_logger(logger_);
  }
  ~RunLog() {
    logger_->flush();
    spdlog::set_default_logger(previous_);
  }
  RunLog(const RunLog&) = delete;
  RunLog& operator=(const RunLog&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
  std::shared_ptr<spdlog::logger> logger_;
};

}  // namespace

Kind parse_kind(const std::string& name) {
  if (name == "train") return Kind::train;
  if (name == "eval") return Kind::eval;
  if (name == "sweep") return Kind::sweep;
  if (name == "corrupt-study") return Kind::corrupt_study;
  if (name == "sscc-compare") return Kind::sscc_compare;
  throw ConfigError("unknown experiment '" + name + "'");
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::train: return "train";
    case Kind::eval: return "eval";
    case Kind::sweep: return "sweep";
    case Kind::corrupt_study: return "corrupt-study";
    case Kind::sscc_compare: return "sscc-compare";
  }
  return "?";
}

std::string csv_line(const ResultRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{}", r.model, csv_number(r.snr_db), r.channel, csv_number(r.psnr),
                     csv_number(r.ssim), csv_number(r.accuracy), csv_number(r.activated_ratio), r.seed);
}

ResultsWriter::ResultsWriter(const fs::path& path, const std::string& header) : out_(path) {
  if (!out_) throw ConfigError("cannot write " + path.string());
  out_ << header << '\n' << std::flush;
}

void ResultsWriter::write(const std::string& line) { out_ << line << '\n' << std::flush; }

void write_plots(std::span<const ResultRow> rows, const fs::path& out) {
  struct Metric {
    const char* name;
    const char* label;
    double ResultRow::*field;
  };
  static const Metric metrics[] = {{"psnr", "PSNR (dB)", &ResultRow::psnr},
                                   {"ssim", "SSIM", &ResultRow::ssim},
                                   {"accuracy", "accuracy", &ResultRow::accuracy},
                                   {"activated_ratio", "activated ratio", &ResultRow::activated_ratio}};
  for (const auto& metric : metrics) {
    // model -> snr -> (sum, count)
    std::map<std::string, std::map<double, std::pair<double, std::size_t>>> acc;
    bool any = false;
    for (const auto& r : rows) {
      const double v = r.*metric.field;
      if (!std::isfinite(v)) continue;
      auto& cell = acc[r.model][r.snr_db];
      cell.first += v;
      cell.second += 1;
      any = true;
    }
    if (!any) continue;
    plot::Figure fig{std::string(metric.label) + " vs SNR", "SNR (dB)", metric.label, {}};
    for (const auto& [model, points] : acc) {
      plot::Series s{model, {}, {}};
      for (const auto& [snr, cell] : points) {
        s.x.push_back(snr);
        s.y.push_back(cell.first / static_cast<double>(cell.second));
      }
      fig.series.push_back(std::move(s));
    }
    plot::write_svg(out / (std::string(metric.name) + "_vs_snr.svg"), fig);
  }
}

void run(Kind kind, const config::ExperimentSpec& spec, const fs::path& out) {
  spec.validate();
  fs::create_directories(out);
  {
    std::ofstream snap(out / "config.cfg");
    snap << "# experiment = " << to_string(kind) << '\n' << spec.snapshot();
  }
  RunLog log(out / "run.log");
  try {
    Runner runner(spec, out);
    switch (kind) {
      case Kind::train: runner.train(); break;
      case Kind::eval: runner.eval(); break;
      case Kind::sweep: runner.sweep(); break;
      case Kind::corrupt_study: runner.corrupt_study(); break;
      case Kind::sscc_compare: runner.sscc_compare(); break;
    }
    write_plots(runner.rows, out);
    spdlog::info("{} finished; results in {}", to_string(kind), out.string());
  } catch (const std::exception& e) {
    spdlog::error("{} failed: {}", to_string(kind), e.what());
    throw;
  }
}

}  // namespace jscc::experiments
