// SPDX-License-Identifier: Apache-2.0
//
// Jet files. Binary layout (little endian):
//   "JETB" | u16 version | u16 schema
//   per jet: u32 count | u8 label | count x (f64 px, py, pz, energy | u8 type)
// A JSON-lines variant carries one object per jet:
//   {"label":"bb","particles":[{"px":..,"py":..,"pz":..,"energy":..,"type_flags":0},...]}

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "jetbench/jetdata.hpp"

namespace jetbench {

inline constexpr std::uint16_t kJetFileVersion = 1;
// Schema 1: four f64 momentum components and one u8 type flag per particle.
inline constexpr std::uint16_t kJetFileSchema = 1;

enum class JetFileFormat { kBinary, kJsonLines };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Streams jets from a binary or JSON-lines file; the format is sniffed from the
// first bytes. An empty file yields an empty stream.
class JetReader {
 public:
  explicit JetReader(const std::filesystem::path& path);

  std::optional<Jet> next();
  std::size_t records_read() const { return record_; }

 private:
  std::optional<Jet> next_binary();
  std::optional<Jet> next_jsonl();
  void read_exact(void* dst, std::size_t n, const char* what);

  std::filesystem::path path_;
  std::ifstream in_;
  JetFileFormat format_ = JetFileFormat::kBinary;
  bool empty_ = false;
  std::size_t record_ = 0;
  std::uint64_t offset_ = 0;
};

std::vector<Jet> read_jets(const std::filesystem::path& path);
void write_jets(const std::filesystem::path& path, std::span<const Jet> jets,
                JetFileFormat format = JetFileFormat::kBinary);

}  // namespace jetbench
