// SPDX-License-Identifier: Apache-2.0

#include "jetbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace jetbench {
namespace {

constexpr char kMagic[4] = {'J', 'B', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(std::string_view s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const TensorRecord& t) {
    str(t.name);
    pod<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) pod<std::uint64_t>(d);
    os_.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  void table(const std::vector<TensorRecord>& ts) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) tensor(t);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) fail("implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  TensorRecord tensor() {
    TensorRecord t;
    t.name = str();
    const auto nd = pod<std::uint8_t>();
    std::size_t total = 1;
    for (std::uint8_t i = 0; i < nd; ++i) {
      t.shape.push_back(pod<std::uint64_t>());
      total *= t.shape.back();
    }
    if (total > (1ULL << 31)) fail("implausible tensor size for " + t.name);
    t.data.resize(total);
    read(reinterpret_cast<char*>(t.data.data()), total * sizeof(double));
    return t;
  }
  std::vector<TensorRecord> table() {
    const auto n = pod<std::uint32_t>();
    std::vector<TensorRecord> out;
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(path_ + ": " + what);
  }

 private:
  void read(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail("truncated checkpoint");
  }
  std::istream& is_;
  std::string path_;
};

}  // namespace

Checkpoint snapshot(const JetModel& model, std::string metadata, const Optimizer* optimizer) {
  Checkpoint c;
  c.config_hash = model.config().hash();
  c.metadata = std::move(metadata);
  for (const auto& [name, v] : model.params().items()) c.params.push_back({name, v->shape, v->value});
  if (optimizer) c.optimizer = OptimizerRecord{optimizer->kind(), optimizer->steps(), optimizer->state()};
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp + " for writing");
    Writer w(os);
    os.write(kMagic, 4);
    w.pod(kVersion);
    w.pod(ckpt.config_hash);
    w.str(ckpt.metadata);
    w.table(ckpt.params);
    w.pod<std::uint8_t>(ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) {
      w.str(ckpt.optimizer->kind);
      w.pod(ckpt.optimizer->steps);
      w.table(ckpt.optimizer->buffers);
    }
    if (!os) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) r.fail("not a checkpoint file");
  if (const auto v = r.pod<std::uint16_t>(); v != kVersion)
    r.fail("unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  c.config_hash = r.pod<std::uint64_t>();
  c.metadata = r.str();
  c.params = r.table();
  if (r.pod<std::uint8_t>() != 0) {
    OptimizerRecord o;
    o.kind = r.str();
    o.steps = r.pod<std::uint64_t>();
    o.buffers = r.table();
    c.optimizer = std::move(o);
  }
  return c;
}

std::size_t restore_params(JetModel& model, const Checkpoint& ckpt, std::string_view prefix) {
  if (ckpt.config_hash != model.config().hash())
    throw CheckpointError("checkpoint encoder config does not match the model configuration");
  // Validate everything before writing so a failed restore leaves the model untouched.
  std::vector<std::pair<const TensorRecord*, ad::Var>> plan;
  for (const auto& t : ckpt.params) {
    if (!t.name.starts_with(prefix)) continue;
    if (!model.params().contains(t.name))
      throw CheckpointError("checkpoint tensor " + t.name + " has no counterpart in the model");
    const auto& dst = model.params().get(t.name);
    if (dst->shape != t.shape)
      throw CheckpointError("shape mismatch for " + t.name + ": checkpoint " +
                            ad::shape_str(t.shape) + ", model " + ad::shape_str(dst->shape));
    plan.emplace_back(&t, dst);
  }
  for (auto& [t, dst] : plan) dst->value = t->data;
  const std::size_t copied = plan.size();
  return copied;
}

}  // namespace jetbench
