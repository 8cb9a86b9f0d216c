// SPDX-License-Identifier: Apache-2.0
//
// AdamW and Muon optimizers, global-norm gradient clipping and the
// validation-based checkpoint selection rule.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jetbench/autodiff.hpp"

namespace jetbench {

using NamedParams = std::vector<std::pair<std::string, ad::Var>>;

// Named state tensor used for checkpointing.
struct TensorRecord {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

// Scales every gradient by max_norm / ||g|| when the global L2 norm exceeds
// max_norm. Parameters without a gradient count as zero. Returns the scale.
double clip_gradients(std::span<const ad::Var> params, double max_norm = 1.0);
double global_grad_norm(std::span<const ad::Var> params);

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct MuonConfig {
  double lr = 0.02;
  double momentum = 0.95;
  int ns_iterations = 5;
  int polish_iterations = 2;
  AdamWConfig fallback;
};

inline constexpr double kNsA = 3.4445;
inline constexpr double kNsB = -4.7750;
inline constexpr double kNsC = 2.0315;
// Quintic with a superattracting fixed point at 1; applied after the
// reference steps, which only bring singular values into [0.68, 1.13].
inline constexpr double kPolishA = 15.0 / 8.0;
inline constexpr double kPolishB = -10.0 / 8.0;
inline constexpr double kPolishC = 3.0 / 8.0;

// Approximate orthogonalization of a row-major [rows, cols] matrix: Frobenius
// normalization then X <- aX + b(XX^T)X + c(XX^T)^2 X on the wide orientation,
// `iterations` reference steps followed by `polish` convergent steps.
std::vector<double> newton_schulz5(std::span<const double> g, std::size_t rows,
                                   std::size_t cols, int iterations = 5, int polish = 2);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  virtual std::string kind() const = 0;
  virtual std::vector<TensorRecord> state() const = 0;
  virtual void load_state(std::uint64_t steps, const std::vector<TensorRecord>& buffers) = 0;
  std::uint64_t steps() const { return steps_; }

 protected:
  std::uint64_t steps_ = 0;
};

class AdamW : public Optimizer {
 public:
  AdamW(NamedParams params, AdamWConfig config);
  void step() override;
  std::string kind() const override { return "adamw"; }
  std::vector<TensorRecord> state() const override;
  void load_state(std::uint64_t steps, const std::vector<TensorRecord>& buffers) override;
  const AdamWConfig& config() const { return config_; }

  // One update with an explicit step index; used by Muon's fallback path.
  void update(std::uint64_t t);

 private:
  NamedParams params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
};

class Muon : public Optimizer {
 public:
  // `matrices` must all be 2-D; `others` take the AdamW fallback.
  Muon(NamedParams matrices, NamedParams others, MuonConfig config);
  void step() override;
  std::string kind() const override { return "muon"; }
  std::vector<TensorRecord> state() const override;
  void load_state(std::uint64_t steps, const std::vector<TensorRecord>& buffers) override;

 private:
  NamedParams matrices_;
  MuonConfig config_;
  std::vector<std::vector<double>> momentum_;
  AdamW fallback_;
};

enum class Phase { kPretrain, kFinetune, kSupervised };

struct ValidationPoint {
  std::size_t epoch = 0;
  double loss = 0.0;
  double macro_auc = 0.0;
};

// Pretraining: lowest loss. Otherwise: highest macro AUC. Ties go to the earliest epoch.
std::size_t select_checkpoint(std::span<const ValidationPoint> history, Phase phase);

}  // namespace jetbench
