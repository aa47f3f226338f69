#include <CLI11.hpp>
#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "jscc/channel.hpp"
#include "jscc/config.hpp"
#include "jscc/error.hpp"
#include "jscc/experiments.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/latest";
  std::string snr;
  std::string channel;
  std::string data;
  std::string checkpoint;
  std::string log_level = "info";
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "key = value configuration file");
  cmd->add_option("--seed", opt.seed, "run a single seed instead of the configured list");
  cmd->add_option("--out", opt.out, "output directory")->capture_default_str();
  cmd->add_option("--snr", opt.snr, "SNR grid in dB: start:step:stop, a,b,c or one value");
  cmd->add_option("--channel", opt.channel, "channel model")->check(CLI::IsMember({"awgn", "rayleigh", "rician"}));
  cmd->add_option("--data", opt.data, "directory holding the raw dataset files");
  cmd->add_option("--log-level", opt.log_level, "trace|debug|info|warn|error")->capture_default_str();
}

jscc::config::ExperimentSpec build_spec(const Options& opt) {
  auto spec = opt.config.empty() ? jscc::config::ExperimentSpec{} : jscc::config::load(opt.config);
  if (opt.seed) spec.seeds = {*opt.seed};
  if (!opt.snr.empty()) {
    spec.snr_grid = jscc::config::parse_grid(opt.snr);
    if (spec.snr_grid.size() == 1) spec.train.snr_db = spec.snr_grid.front();
  }
  if (!opt.channel.empty()) spec.train.channel.model = jscc::channel::parse_model(opt.channel);
  if (!opt.data.empty()) spec.dataset.path = opt.data;
  if (!opt.checkpoint.empty()) spec.checkpoint = opt.checkpoint;
  spec.validate();
  return spec;
}

void apply_threads() {
  if (const char* env = std::getenv("JSCC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep joint source-channel coding experiments"};
  app.require_subcommand(1);
  Options opt;
  for (const char* name : {"train", "eval", "sweep", "corrupt-study", "sscc-compare"}) {
    auto* cmd = app.add_subcommand(name);
    add_common(cmd, opt);
    if (std::string(name) == "eval") cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint to evaluate");
  }
  app.get_subcommand("train")->description("train one model per seed at snr_db");
  app.get_subcommand("eval")->description("evaluate a checkpoint over the SNR grid");
  app.get_subcommand("sweep")->description("train per seed, evaluate over the SNR grid (gated: also fixed models)");
  app.get_subcommand("corrupt-study")->description("rate reduction vs cross-entropy under label corruption");
  app.get_subcommand("sscc-compare")->description("per-SNR models against the separate source/channel baseline");
  CLI11_PARSE(app, argc, argv);

  spdlog::set_level(spdlog::level::from_str(opt.log_level));
  apply_threads();
  try {
    const auto kind = jscc::experiments::parse_kind(app.get_subcommands().front()->get_name());
    jscc::experiments::run(kind, build_spec(opt), opt.out);
  } catch (const jscc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
