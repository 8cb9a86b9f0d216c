// SPDX-License-Identifier: Apache-2.0
//
// Pretrain / fine-tune / supervised / evaluate lifecycle, dataset assembly and
// the run records written next to the checkpoints.

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jetbench/checkpoint.hpp"
#include "jetbench/config.hpp"
#include "jetbench/evalmetrics.hpp"
#include "jetbench/sampler.hpp"

namespace jetbench {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<MetricReport> val_report;
  std::string checkpoint;
  double seconds = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunRecord {
  std::string objective;
  std::string phase;  // pretrain | finetune | supervised
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string best_checkpoint;
  double wall_clock_seconds = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

// Jets are normalized on load. Train/val pools feed the stratified sampler;
// test is the natural-mix stream.
struct Dataset {
  ClassSources train;
  ClassSources val;
  std::vector<std::filesystem::path> test_files;  // files source
  std::vector<Jet> test;                          // toy source
};

Dataset load_dataset(const DataSpec& spec);

// Softmax scores of the classifier in inference mode.
ScoreMatrix score_jets(const JetModel& model, std::span<const Jet> jets, std::size_t nmax,
                       std::size_t batch_size);

RunRecord run_pretrain(const RunConfig& cfg);
// Without a checkpoint the encoder keeps its random initialization.
RunRecord run_finetune(const RunConfig& cfg,
                       const std::optional<std::filesystem::path>& pretrained);
RunRecord run_supervised(const RunConfig& cfg);
// split: train | val | test.
MetricReport run_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                          const std::string& split);

// Model with the heads and config recorded in a checkpoint, weights restored.
JetModel model_from_checkpoint(const Checkpoint& ckpt);
RunConfig config_from_checkpoint(const Checkpoint& ckpt);

// Writes jets_NNN files and manifest.txt (paths relative to out_dir).
SplitManifest generate_dataset(const GenDataSpec& spec, const std::filesystem::path& out_dir);

// Finite-difference and invariance checks on a tiny model; one line per check.
bool run_selfcheck(std::ostream& out);

// Applies the JETBENCH_LOG_LEVEL environment variable, else `fallback`.
void init_logging(const std::string& fallback = "info");

}  // namespace jetbench
