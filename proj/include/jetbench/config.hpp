// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: objective, presets, data source, training schedule and
// augmentation pipelines. Files are YAML; every section is validated against
// a fixed schema and unknown keys are rejected. The same schema is used for
// the JSON copy embedded in checkpoints.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "jetbench/augment.hpp"
#include "jetbench/encoder.hpp"
#include "jetbench/sampler.hpp"

namespace jetbench {

enum class Objective { kSupervised, kSupervisedModified, kJetClr, kSupCon, kMpm, kClipVae };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& name);
bool is_pretraining(Objective o);

struct ToyDataSpec {
  std::uint64_t seed = 11;
  std::size_t train_per_class = 2000;
  std::size_t val_per_class = 500;
  std::size_t test_jets = 3000;
};

struct DataSpec {
  std::string source = "toy";  // toy | files
  std::string manifest;        // split manifest when source == files
  std::size_t nmax = 32;
  ToyDataSpec toy;
};

struct TrainingSpec {
  std::size_t epoch_size = 5400;
  std::size_t val_epoch_size = 1350;
  std::size_t pretrain_epochs = 5;
  std::size_t finetune_epochs = 3;
  std::size_t supervised_epochs = 3;
  std::size_t batch_size = 64;
  std::size_t eval_batch_size = 256;
  std::string optimizer = "adamw";  // adamw | muon
  double lr = 1e-3;
  double weight_decay = 0.01;
  double muon_lr = 0.02;
  double clip_norm = 1.0;  // 0 disables clipping
  bool freeze_encoder = false;
};

struct RunConfig {
  Objective objective = Objective::kSupervised;
  std::string preset = "desk";  // desk | paper
  std::uint64_t seed = 7;
  std::string output_dir = "runs";
  EncoderConfig encoder;
  DataSpec data;
  TrainingSpec training;
  AugmentationPipeline train_views;
  AugmentationPipeline val_views;

  // Preset defaults for an objective before any overrides.
  static RunConfig defaults(Objective objective, const std::string& preset);
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Starts from the preset named in `j` (default desk) and applies every key.
RunConfig run_config_from_json(const nlohmann::json& j);

// YAML text -> JSON tree. Unquoted scalars become bool, integer or float when
// they parse as one.
nlohmann::json yaml_to_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const AugmentStep& step);
AugmentStep augment_step_from_json(const nlohmann::json& j);

// Synthetic dataset written by `gen-data`.
struct GenDataSpec {
  std::uint64_t seed = 1;
  std::size_t files = 10;
  std::size_t jets_per_file = 500;
  std::string format = "binary";  // binary | jsonl
  std::array<double, 3> split{0.6, 0.2, 0.2};
};

GenDataSpec gen_spec_from_json(const nlohmann::json& j);
GenDataSpec load_gen_spec(const std::filesystem::path& path);

// Natural class mix used for generated test streams and data files.
std::array<double, kNumClasses> natural_class_fractions();

}  // namespace jetbench
