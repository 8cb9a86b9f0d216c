// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical stratified epoch construction and file-level splits.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "jetbench/jetdata.hpp"
#include "jetbench/jetio.hpp"

namespace jetbench {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64 finalizer over (seed, stream); independent substreams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

using ClassCounts = std::array<std::size_t, kNumClasses>;

// Per-class target fractions held as integer weights over a common denominator
// so that they sum to one exactly.
struct SamplingPolicy {
  std::array<std::uint64_t, kNumClasses> weights{};
  std::uint64_t denominator = 1;
  std::size_t epoch_size = 0;

  // 1/3 QCD, 1/3 qqb_bcs, 1/9 bb, 1/9 qq, 1/27 per di-tau channel.
  static SamplingPolicy balanced(std::size_t epoch_size);
  void validate() const;
};

// Largest-remainder apportionment of fractions x epoch_size. Ties in the
// remainder go to the larger fraction, then to the lower class index.
ClassCounts apportion(const SamplingPolicy& policy);

// Cycles through one class's jets, reshuffling on every wrap.
class ClassPool {
 public:
  ClassPool(std::shared_ptr<const std::vector<Jet>> jets, std::uint64_t seed);

  const Jet& next();
  std::size_t size() const { return jets_->size(); }

 private:
  void reshuffle();

  std::shared_ptr<const std::vector<Jet>> jets_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

using ClassSources = std::array<std::shared_ptr<const std::vector<Jet>>, kNumClasses>;

// Groups jets by label.
ClassSources group_by_class(std::vector<Jet> jets);

// Emits exactly `epoch_size` jets per epoch with deterministic per-class counts
// in a globally shuffled order. Draws are with replacement across epochs.
class StratifiedSampler {
 public:
  StratifiedSampler(SamplingPolicy policy, const ClassSources& sources, std::uint64_t seed);

  // Starts a new epoch; returns the label sequence it will follow.
  const std::vector<std::uint8_t>& begin_epoch();
  bool done() const { return position_ >= sequence_.size(); }
  const Jet& next();
  // Up to `n` jets from the current epoch.
  std::vector<Jet> next_batch(std::size_t n);

  // Convenience: a whole epoch materialized.
  std::vector<Jet> draw_epoch();

  const SamplingPolicy& policy() const { return policy_; }
  const ClassCounts& target_counts() const { return counts_; }
  const ClassCounts& realized_counts() const { return realized_; }

 private:
  SamplingPolicy policy_;
  ClassCounts counts_{};
  ClassCounts realized_{};
  std::vector<ClassPool> pools_;
  std::vector<std::uint8_t> sequence_;
  std::size_t position_ = 0;
  std::mt19937_64 rng_;
};

// ---- file-level splits -----------------------------------------------------

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  const std::vector<std::string>& split(const std::string& name) const;
  void validate() const;  // throws if any file appears in two splits
};

SplitManifest split_files(std::vector<std::string> files, const std::array<double, 3>& ratios,
                          std::mt19937_64& rng);

void write_manifest(const std::filesystem::path& path, const SplitManifest& m);
SplitManifest read_manifest(const std::filesystem::path& path);

// Visits every jet of the listed files exactly once, in file order. No
// reweighting is applied.
class NaturalStream {
 public:
  explicit NaturalStream(std::vector<std::filesystem::path> files);
  std::optional<Jet> next();

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t file_ = 0;
  std::unique_ptr<JetReader> reader_;
};

}  // namespace jetbench
