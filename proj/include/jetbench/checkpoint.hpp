// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint files: "JBCK", format version, encoder config hash, a JSON
// metadata blob, the named parameter table and optional optimizer state. All
// integers are little-endian; payloads are raw IEEE-754 doubles.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "jetbench/encoder.hpp"
#include "jetbench/optim.hpp"

namespace jetbench {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerRecord {
  std::string kind;
  std::uint64_t steps = 0;
  std::vector<TensorRecord> buffers;

  friend bool operator==(const OptimizerRecord&, const OptimizerRecord&) = default;
};

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string metadata;  // JSON text
  std::vector<TensorRecord> params;
  std::optional<OptimizerRecord> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

Checkpoint snapshot(const JetModel& model, std::string metadata,
                    const Optimizer* optimizer = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every checkpoint tensor whose name starts with `prefix` into the model.
// Each must exist in the model with an identical shape, and the encoder config
// hashes must agree. Returns the number of tensors copied.
std::size_t restore_params(JetModel& model, const Checkpoint& ckpt, std::string_view prefix = "");

}  // namespace jetbench
