#include "jscc/config.hpp"

#include <boost/program_options/options_description.hpp>
#include <boost/program_options/parsers.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "jscc/error.hpp"

namespace jscc::config {

namespace po = boost::program_options;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string ascii_minus(std::string s) {
  static const std::string kMinus = "\xE2\x88\x92";
  for (auto pos = s.find(kMinus); pos != std::string::npos; pos = s.find(kMinus, pos)) s.replace(pos, kMinus.size(), "-");
  return s;
}

double to_double(std::string_view text) {
  const std::string s = ascii_minus(trim(text));
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) throw ConfigError("'" + s + "' is not a number");
  return v;
}

std::uint64_t to_unsigned(std::string_view text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) throw ConfigError("'" + s + "' is not a nonnegative integer");
  return v;
}

bool to_bool(std::string_view text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("'" + s + "' is not a boolean");
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(std::string_view text, F convert) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) out.push_back(static_cast<T>(convert(item)));
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

template <typename T>
std::string list(const std::vector<T>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

const char* name_of(trainer::SigmaSampling s) { return s == trainer::SigmaSampling::linear ? "linear" : "decibel"; }
const char* name_of(trainer::Discretization d) {
  return d == trainer::Discretization::verbatim ? "verbatim" : "corrected";
}
const char* name_of(objectives::LogBase b) { return b == objectives::LogBase::natural ? "natural" : "binary"; }
const char* name_of(classifier::SubspacePolicy::Kind k) {
  return k == classifier::SubspacePolicy::Kind::fixed ? "fixed" : "energy";
}

template <typename E>
E pick(std::string_view text, std::initializer_list<std::pair<const char*, E>> options) {
  const std::string s = trim(text);
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += names.empty() ? name : std::string("|") + name;
  }
  throw ConfigError("'" + s + "' is not one of " + names);
}

struct Key {
  const char* name;
  std::function<std::string(const ExperimentSpec&)> get;
  std::function<void(ExperimentSpec&, const std::string&)> set;
};

const std::vector<Key>& keys() {
  using S = ExperimentSpec;
  using V = const std::string&;
  static const std::vector<Key> table = {
      {"dataset", [](const S& s) { return s.dataset.name; }, [](S& s, V v) { s.dataset.name = trim(v); }},
      {"data_path", [](const S& s) { return s.dataset.path.string(); }, [](S& s, V v) { s.dataset.path = trim(v); }},
      {"train_count", [](const S& s) { return std::to_string(s.dataset.train_count); },
       [](S& s, V v) { s.dataset.train_count = to_unsigned(v); }},
      {"test_count", [](const S& s) { return std::to_string(s.dataset.test_count); },
       [](S& s, V v) { s.dataset.test_count = to_unsigned(v); }},
      {"split_seed", [](const S& s) { return std::to_string(s.dataset.split_seed); },
       [](S& s, V v) { s.dataset.split_seed = to_unsigned(v); }},
      {"model", [](const S& s) { return s.network.preset; }, [](S&, V) {}},
      {"feature_dim", [](const S& s) { return std::to_string(s.network.feature_dim); },
       [](S& s, V v) { s.network.feature_dim = to_unsigned(v); }},
      {"hidden", [](const S& s) { return list(s.network.hidden); },
       [](S& s, V v) { s.network.hidden = to_list<std::size_t>(v, to_unsigned); }},
      {"width_scale", [](const S& s) { return num(s.network.width_scale); },
       [](S& s, V v) { s.network.width_scale = to_double(v); }},
      {"lrelu_slope", [](const S& s) { return num(s.network.lrelu_slope); },
       [](S& s, V v) { s.network.lrelu_slope = to_double(v); }},
      {"eps_sq", [](const S& s) { return num(s.train.rate.eps_sq); },
       [](S& s, V v) { s.train.rate.eps_sq = to_double(v); }},
      {"beta", [](const S& s) { return num(s.train.rate.beta); }, [](S& s, V v) { s.train.rate.beta = to_double(v); }},
      {"log_base", [](const S& s) { return std::string(name_of(s.train.rate.log_base)); },
       [](S& s, V v) {
         s.train.rate.log_base =
             pick<objectives::LogBase>(v, {{"natural", objectives::LogBase::natural}, {"binary", objectives::LogBase::binary}});
       }},
      {"learning_rate", [](const S& s) { return num(s.train.adam.learning_rate); },
       [](S& s, V v) { s.train.adam.learning_rate = to_double(v); }},
      {"adam_beta1", [](const S& s) { return num(s.train.adam.beta1); },
       [](S& s, V v) { s.train.adam.beta1 = to_double(v); }},
      {"adam_beta2", [](const S& s) { return num(s.train.adam.beta2); },
       [](S& s, V v) { s.train.adam.beta2 = to_double(v); }},
      {"adam_eps", [](const S& s) { return num(s.train.adam.eps); }, [](S& s, V v) { s.train.adam.eps = to_double(v); }},
      {"batch_size", [](const S& s) { return std::to_string(s.train.batch_size); },
       [](S& s, V v) { s.train.batch_size = to_unsigned(v); }},
      {"epochs", [](const S& s) { return std::to_string(s.train.epochs); },
       [](S& s, V v) { s.train.epochs = to_unsigned(v); }},
      {"channel", [](const S& s) { return channel::to_string(s.train.channel.model); },
       [](S& s, V v) { s.train.channel.model = channel::parse_model(trim(v)); }},
      {"rician_k", [](const S& s) { return num(s.train.channel.rician_k); },
       [](S& s, V v) { s.train.channel.rician_k = to_double(v); }},
      {"snr_db", [](const S& s) { return num(s.train.snr_db); }, [](S& s, V v) { s.train.snr_db = to_double(v); }},
      {"snr_grid", [](const S& s) { return list(s.snr_grid); }, [](S& s, V v) { s.snr_grid = parse_grid(v); }},
      {"snr_train_min", [](const S& s) { return num(s.train.snr_min_db); },
       [](S& s, V v) { s.train.snr_min_db = to_double(v); }},
      {"snr_train_max", [](const S& s) { return num(s.train.snr_max_db); },
       [](S& s, V v) { s.train.snr_max_db = to_double(v); }},
      {"noiseless", [](const S& s) { return std::string(s.train.noiseless ? "true" : "false"); },
       [](S& s, V v) { s.train.noiseless = to_bool(v); }},
      {"track_accuracy", [](const S& s) { return std::string(s.train.track_accuracy ? "true" : "false"); },
       [](S& s, V v) { s.train.track_accuracy = to_bool(v); }},
      {"gated", [](const S& s) { return std::string(s.gated ? "true" : "false"); },
       [](S& s, V v) { s.gated = to_bool(v); }},
      {"gate_hidden", [](const S& s) { return list(s.gate.hidden); },
       [](S& s, V v) { s.gate.hidden = to_list<std::size_t>(v, to_unsigned); }},
      {"gate_threshold", [](const S& s) { return num(s.gate.threshold); },
       [](S& s, V v) { s.gate.threshold = to_double(v); }},
      {"gate_temperature", [](const S& s) { return num(s.gate.temperature); },
       [](S& s, V v) { s.gate.temperature = to_double(v); }},
      {"gate_min_active", [](const S& s) { return std::to_string(s.gate.min_active); },
       [](S& s, V v) { s.gate.min_active = to_unsigned(v); }},
      {"gate_bins", [](const S& s) { return std::to_string(s.gate.bins); },
       [](S& s, V v) { s.gate.bins = to_unsigned(v); }},
      {"gate_cost", [](const S& s) { return num(s.train.gate_cost); }, [](S& s, V v) { s.train.gate_cost = to_double(v); }},
      {"sigma_sampling", [](const S& s) { return std::string(name_of(s.train.sampling)); },
       [](S& s, V v) {
         s.train.sampling = pick<trainer::SigmaSampling>(
             v, {{"linear", trainer::SigmaSampling::linear}, {"decibel", trainer::SigmaSampling::decibel}});
       }},
      {"discretization", [](const S& s) { return std::string(name_of(s.train.discretization)); },
       [](S& s, V v) {
         s.train.discretization = pick<trainer::Discretization>(
             v, {{"verbatim", trainer::Discretization::verbatim}, {"corrected", trainer::Discretization::corrected}});
       }},
      {"subspace_policy", [](const S& s) { return std::string(name_of(s.subspace.kind)); },
       [](S& s, V v) {
         using K = classifier::SubspacePolicy::Kind;
         s.subspace.kind = pick<K>(v, {{"fixed", K::fixed}, {"energy", K::energy}});
       }},
      {"subspace_components", [](const S& s) { return std::to_string(s.subspace.components); },
       [](S& s, V v) { s.subspace.components = to_unsigned(v); }},
      {"subspace_energy", [](const S& s) { return num(s.subspace.energy); },
       [](S& s, V v) { s.subspace.energy = to_double(v); }},
      {"lcr_grid", [](const S& s) { return list(s.lcr_grid); }, [](S& s, V v) { s.lcr_grid = parse_grid(v); }},
      {"corrupt_beta", [](const S& s) { return num(s.corrupt_beta); }, [](S& s, V v) { s.corrupt_beta = to_double(v); }},
      {"corrupt_epochs", [](const S& s) { return std::to_string(s.corrupt_epochs); },
       [](S& s, V v) { s.corrupt_epochs = to_unsigned(v); }},
      {"seeds", [](const S& s) { return list(s.seeds); },
       [](S& s, V v) { s.seeds = to_list<std::uint64_t>(v, to_unsigned); }},
      {"compression_ratio", [](const S& s) { return num(s.compression_ratio); },
       [](S& s, V v) { s.compression_ratio = to_double(v); }},
      {"codec_base_coefficients", [](const S& s) { return std::to_string(s.codec.base_coefficients); },
       [](S& s, V v) { s.codec.base_coefficients = to_unsigned(v); }},
      {"codec_base_step", [](const S& s) { return num(s.codec.base_step); },
       [](S& s, V v) { s.codec.base_step = to_double(v); }},
      {"codec_halving_levels", [](const S& s) { return num(s.codec.halving_levels); },
       [](S& s, V v) { s.codec.halving_levels = to_double(v); }},
      {"codec_base_bits", [](const S& s) { return std::to_string(s.codec.base_bits); },
       [](S& s, V v) { s.codec.base_bits = to_unsigned(v); }},
      {"checkpoint", [](const S& s) { return s.checkpoint.string(); }, [](S& s, V v) { s.checkpoint = trim(v); }},
  };
  return table;
}

const std::vector<std::string> kArchitectureKeys = {"model",       "feature_dim", "hidden",    "width_scale",
                                                    "lrelu_slope", "gated",       "gate_hidden"};

models::NetworkConfig network_preset(const std::string& name) {
  if (name == "conv-mnist") return models::NetworkConfig::conv_mnist();
  if (name == "residual-cifar") return models::NetworkConfig::residual_cifar();
  models::NetworkConfig cfg;
  cfg.preset = name;
  return cfg;
}

void sync_gate_range(ExperimentSpec& spec) {
  spec.gate.sigma2_min = spec.train.sigma2_min();
  spec.gate.sigma2_max = spec.train.sigma2_max();
}

}  // namespace

ExperimentSpec::ExperimentSpec() : snr_grid(parse_grid("-3:3:21")) { sync_gate_range(*this); }

std::string ExperimentSpec::snapshot() const {
  std::string out;
  for (const auto& key : keys()) out += fmt::format("{} = {}\n", key.name, key.get(*this));
  return out;
}

std::string ExperimentSpec::architecture() const {
  std::string out;
  for (const auto& key : keys()) {
    if (std::find(kArchitectureKeys.begin(), kArchitectureKeys.end(), key.name) != kArchitectureKeys.end()) {
      out += fmt::format("{} = {}\n", key.name, key.get(*this));
    }
  }
  return out;
}

void ExperimentSpec::validate() const {
  std::vector<std::string> problems;
  auto collect = [&](auto&& check) {
    try {
      check();
    } catch (const ValidationError& e) {
      problems.insert(problems.end(), e.problems().begin(), e.problems().end());
    } catch (const Error& e) {
      problems.emplace_back(e.what());
    }
  };
  collect([&] { network.validate(); });
  collect([&] { train.validate(); });
  if (gated) collect([&] { gate.validate(); });
  static const std::vector<std::string> datasets = {"mnist-3class-8x8", "synthetic-subspace", "mnist", "cifar10"};
  if (std::find(datasets.begin(), datasets.end(), dataset.name) == datasets.end()) {
    problems.push_back("dataset: unknown preset '" + dataset.name + "'");
  }
  if (!(train.adam.learning_rate > 0.0)) problems.push_back("learning_rate: must be positive");
  if (train.channel.rician_k < 0.0) problems.push_back("rician_k: must be nonnegative");
  if (snr_grid.empty()) problems.push_back("snr_grid: must not be empty");
  for (double s : snr_grid) {
    if (!std::isfinite(s)) problems.push_back("snr_grid: values must be finite");
  }
  for (double l : lcr_grid) {
    if (!(l >= 0.0 && l <= 1.0)) problems.push_back("lcr_grid: values must lie in [0, 1]");
  }
  if (seeds.empty()) problems.push_back("seeds: must not be empty");
  if (corrupt_beta < 0.0) problems.push_back("corrupt_beta: must be nonnegative");
  if (corrupt_epochs == 0) problems.push_back("corrupt_epochs: must be positive");
  if (!(compression_ratio > 0.0)) problems.push_back("compression_ratio: must be positive");
  if (subspace.components == 0) problems.push_back("subspace_components: must be positive");
  if (!(subspace.energy > 0.0 && subspace.energy <= 1.0)) problems.push_back("subspace_energy: must lie in (0, 1]");
  if (codec.base_coefficients == 0 || codec.base_coefficients > 64) {
    problems.push_back("codec_base_coefficients: must lie in [1, 64]");
  }
  if (!(codec.base_step > 0.0)) problems.push_back("codec_base_step: must be positive");
  if (!(codec.halving_levels > 0.0)) problems.push_back("codec_halving_levels: must be positive");
  if (codec.base_bits == 0 || codec.base_bits > 16) problems.push_back("codec_base_bits: must lie in [1, 16]");
  if (!problems.empty()) throw ValidationError(problems);
}

std::vector<double> parse_grid(std::string_view text) {
  const std::string s = trim(text);
  if (s.empty()) return {};
  if (s.find(':') == std::string::npos) return to_list<double>(s, to_double);
  const auto parts = split(s, ':');
  if (parts.size() != 3) throw ConfigError("grid '" + s + "' must read start:step:stop");
  const double start = to_double(parts[0]), step = to_double(parts[1]), stop = to_double(parts[2]);
  if (!(step > 0.0) || stop < start) throw ConfigError("grid '" + s + "' needs a positive step and start <= stop");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) out.push_back(start + step * static_cast<double>(i));
  return out;
}

ExperimentSpec parse(std::string_view text) {
  po::options_description desc;
  for (const auto& key : keys()) desc.add_options()(key.name, po::value<std::string>());
  std::istringstream in{std::string(text)};
  po::parsed_options parsed(&desc);
  try {
    parsed = po::parse_config_file(in, desc, true);
  } catch (const po::error& e) {
    throw ValidationError({e.what()});
  }

  std::vector<std::string> problems;
  std::map<std::string, std::string> values;
  for (const auto& opt : parsed.options) {
    if (opt.unregistered) {
      problems.push_back(opt.string_key + ": unknown key");
      continue;
    }
    const std::string value = opt.value.empty() ? std::string() : opt.value.front();
    if (!values.emplace(opt.string_key, value).second) problems.push_back(opt.string_key + ": given more than once");
  }

  ExperimentSpec spec;
  if (auto it = values.find("model"); it != values.end()) spec.network = network_preset(trim(it->second));
  for (const auto& key : keys()) {
    auto it = values.find(key.name);
    if (it == values.end()) continue;
    try {
      key.set(spec, it->second);
    } catch (const Error& e) {
      problems.push_back(std::string(key.name) + ": " + e.what());
    }
  }
  if (!problems.empty()) throw ValidationError(problems);
  sync_gate_range(spec);
  spec.validate();
  return spec;
}

ExperimentSpec load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

}  // namespace jscc::config
