#include "jscc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "jscc/data.hpp"
#include "jscc/error.hpp"

namespace jscc::checkpoint {

namespace {

constexpr char kMagic[4] = {'J', 'S', 'C', 'K'};

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    need(sizeof(T));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Block* Checkpoint::find(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::uint64_t fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, ckpt.fingerprint);
  put<std::uint64_t>(out, ckpt.blocks.size());
  for (const auto& b : ckpt.blocks) {
    std::uint64_t count = 1;
    for (auto e : b.shape) count *= e;
    if (count != b.values.size()) throw CheckpointError("block " + b.name + " shape does not match its values");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.insert(out.end(), b.name.begin(), b.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
    for (auto e : b.shape) put<std::uint64_t>(out, e);
    for (double v : b.values) put<double>(out, v);
  }
  return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.text(4) != std::string(kMagic, 4)) throw CheckpointError("not a checkpoint file");
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.fingerprint = in.get<std::uint64_t>();
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    Block b;
    b.name = in.text(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      b.shape.push_back(in.get<std::uint64_t>());
      total *= b.shape.back();
    }
    if (total > bytes.size()) throw CheckpointError("checkpoint block " + b.name + " is truncated");
    b.values.resize(total);
    for (auto& v : b.values) v = in.get<double>();
    ckpt.blocks.push_back(std::move(b));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint blocks");
  return ckpt;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load(const std::filesystem::path& path, std::uint64_t expected) {
  const auto bytes = data::read_file(path);
  auto ckpt = deserialize(bytes);
  if (ckpt.fingerprint != expected) {
    throw CheckpointError("checkpoint " + path.string() + " was written for a different configuration");
  }
  return ckpt;
}

void add_parameters(Checkpoint& ckpt, const models::ParameterStore& store) {
  for (const auto& e : store.entries()) {
    Block b;
    b.name = e.name;
    b.shape.assign(e.tensor.shape().begin(), e.tensor.shape().end());
    b.values.assign(e.tensor.value().begin(), e.tensor.value().end());
    ckpt.blocks.push_back(std::move(b));
  }
}

void restore_parameters(const Checkpoint& ckpt, models::ParameterStore& store) {
  for (const auto& e : store.entries()) {
    const Block* b = ckpt.find(e.name);
    if (!b) throw CheckpointError("checkpoint has no block " + e.name);
    if (!std::equal(b->shape.begin(), b->shape.end(), e.tensor.shape().begin(), e.tensor.shape().end())) {
      throw CheckpointError("block " + e.name + " has a different shape");
    }
    ad::Tensor t = e.tensor;
    std::copy(b->values.begin(), b->values.end(), t.mutable_value().begin());
  }
}

void add_subspaces(Checkpoint& ckpt, const classifier::SubspaceModel& model) {
  for (std::size_t j = 0; j < model.classes.size(); ++j) {
    const auto& c = model.classes[j];
    const std::string prefix = "nsc." + std::to_string(j);
    ckpt.blocks.push_back({prefix + ".mean", {static_cast<std::uint64_t>(c.mean.size())},
                           std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())});
    Block basis{prefix + ".basis",
                {static_cast<std::uint64_t>(c.basis.rows()), static_cast<std::uint64_t>(c.basis.cols())},
                {}};
    for (Eigen::Index r = 0; r < c.basis.rows(); ++r)
      for (Eigen::Index k = 0; k < c.basis.cols(); ++k) basis.values.push_back(c.basis(r, k));
    ckpt.blocks.push_back(std::move(basis));
  }
}

classifier::SubspaceModel read_subspaces(const Checkpoint& ckpt) {
  classifier::SubspaceModel model;
  for (std::size_t j = 0;; ++j) {
    const std::string prefix = "nsc." + std::to_string(j);
    const Block* mean = ckpt.find(prefix + ".mean");
    const Block* basis = ckpt.find(prefix + ".basis");
    if (!mean || !basis) break;
    if (basis->shape.size() != 2 || basis->shape[0] != mean->values.size()) {
      throw CheckpointError("subspace block " + prefix + " is malformed");
    }
    classifier::ClassSubspace c;
    c.mean = Eigen::Map<const Eigen::VectorXd>(mean->values.data(), static_cast<Eigen::Index>(mean->values.size()));
    c.basis.resize(static_cast<Eigen::Index>(basis->shape[0]), static_cast<Eigen::Index>(basis->shape[1]));
    for (Eigen::Index r = 0; r < c.basis.rows(); ++r)
      for (Eigen::Index k = 0; k < c.basis.cols(); ++k)
        c.basis(r, k) = basis->values[static_cast<std::size_t>(r * c.basis.cols() + k)];
    model.classes.push_back(std::move(c));
  }
  return model;
}

}  // namespace jscc::checkpoint
