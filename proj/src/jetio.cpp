// SPDX-License-Identifier: Apache-2.0

#include "jetbench/jetio.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

namespace jetbench {
namespace {

static_assert(std::endian::native == std::endian::little, "jet files are little endian");

constexpr char kMagic[4] = {'J', 'E', 'T', 'B'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

JetReader::JetReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw FormatError("cannot open jet file " + path.string());
  const int first = in_.peek();
  if (first == std::char_traits<char>::eof()) {
    empty_ = true;
    return;
  }
  if (first == 'J') {
    char magic[4];
    read_exact(magic, 4, "file magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
      throw FormatError(path.string() + ": bad magic, expected JETB");
    std::uint16_t version = 0, schema = 0;
    read_exact(&version, sizeof version, "version");
    read_exact(&schema, sizeof schema, "schema");
    if (version != kJetFileVersion)
      throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    if (schema != kJetFileSchema)
      throw FormatError(path.string() + ": unsupported feature schema " + std::to_string(schema));
    format_ = JetFileFormat::kBinary;
  } else {
    format_ = JetFileFormat::kJsonLines;
  }
}

void JetReader::read_exact(void* dst, std::size_t n, const char* what) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got != n)
    throw FormatError(path_.string() + ": truncated at byte offset " +
                      std::to_string(offset_ + got) + " while reading " + what + " of record " +
                      std::to_string(record_));
  offset_ += n;
}

std::optional<Jet> JetReader::next() {
  if (empty_) return std::nullopt;
  auto jet = format_ == JetFileFormat::kBinary ? next_binary() : next_jsonl();
  if (jet) ++record_;
  return jet;
}

std::optional<Jet> JetReader::next_binary() {
  if (in_.peek() == std::char_traits<char>::eof()) return std::nullopt;
  std::uint32_t count = 0;
  std::uint8_t label = 0;
  read_exact(&count, sizeof count, "particle count");
  read_exact(&label, sizeof label, "label");
  if (label >= kNumClasses)
    throw FormatError(path_.string() + ": record " + std::to_string(record_) +
                      " has invalid label code " + std::to_string(label));
  if (count == 0)
    throw FormatError(path_.string() + ": record " + std::to_string(record_) + " has no particles");
  Jet jet;
  jet.label = class_at(label);
  jet.particles.resize(count);
  for (auto& p : jet.particles) {
    double v[4];
    std::uint8_t type = 0;
    read_exact(v, sizeof v, "particle momentum");
    read_exact(&type, sizeof type, "particle type");
    if (type >= kNumParticleTypes)
      throw FormatError(path_.string() + ": record " + std::to_string(record_) +
                        " has invalid particle type " + std::to_string(type));
    p.p = {v[0], v[1], v[2], v[3]};
    p.type = static_cast<ParticleType>(type);
  }
  return jet;
}

std::optional<Jet> JetReader::next_jsonl() {
  std::string line;
  while (std::getline(in_, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      Jet jet;
      const auto label = class_from_name(doc.at("label").get<std::string>());
      if (!label) throw FormatError("unknown label");
      jet.label = *label;
      for (const auto& p : doc.at("particles")) {
        const auto type = p.at("type_flags").get<int>();
        if (type < 0 || type >= static_cast<int>(kNumParticleTypes))
          throw FormatError("invalid particle type");
        jet.particles.push_back({{p.at("px").get<double>(), p.at("py").get<double>(),
                                  p.at("pz").get<double>(), p.at("energy").get<double>()},
                                 static_cast<ParticleType>(type)});
      }
      if (jet.particles.empty()) throw FormatError("no particles");
      return jet;
    } catch (const std::exception& e) {
      throw FormatError(path_.string() + ": malformed record " + std::to_string(record_) + ": " +
                        e.what());
    }
  }
  return std::nullopt;
}

std::vector<Jet> read_jets(const std::filesystem::path& path) {
  JetReader reader(path);
  std::vector<Jet> jets;
  while (auto j = reader.next()) jets.push_back(std::move(*j));
  return jets;
}

void write_jets(const std::filesystem::path& path, std::span<const Jet> jets,
                JetFileFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write jet file " + path.string());
  if (format == JetFileFormat::kJsonLines) {
    for (const auto& jet : jets) {
      nlohmann::json doc;
      doc["label"] = std::string(class_name(jet.label));
      auto& parts = doc["particles"] = nlohmann::json::array();
      for (const auto& p : jet.particles)
        parts.push_back({{"px", p.p.px},
                         {"py", p.p.py},
                         {"pz", p.p.pz},
                         {"energy", p.p.energy},
                         {"type_flags", static_cast<int>(p.type)}});
      out << doc.dump() << '\n';
    }
    return;
  }
  out.write(kMagic, 4);
  put(out, kJetFileVersion);
  put(out, kJetFileSchema);
  for (const auto& jet : jets) {
    put(out, static_cast<std::uint32_t>(jet.particles.size()));
    put(out, static_cast<std::uint8_t>(jet.label));
    for (const auto& p : jet.particles) {
      put(out, p.p.px);
      put(out, p.p.py);
      put(out, p.p.pz);
      put(out, p.p.energy);
      put(out, static_cast<std::uint8_t>(p.type));
    }
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace jetbench
