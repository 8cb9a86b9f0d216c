// SPDX-License-Identifier: Apache-2.0
//
// Training losses: NT-Xent, supervised contrastive (L_out form), masked
// particle reconstruction, VAE reconstruction + KL and cross-entropy.

#pragma once

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "jetbench/autodiff.hpp"
#include "jetbench/jetdata.hpp"

namespace jetbench {

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kNtXentTemperature = 0.1;
inline constexpr double kSupConTemperature = 0.07;
inline constexpr double kMaskRate = 0.3;

// Rows i and i + B of `embeddings` [2B, D] are the two views of jet i.
ad::Var ntxent_loss(ad::Tape& t, const ad::Var& embeddings, double tau = kNtXentTemperature);

struct SupConResult {
  ad::Var loss;
  std::size_t skipped = 0;  // anchors without any positive
};

// labels has 2B entries; positives share a label (self excluded).
SupConResult supcon_loss(ad::Tape& t, const ad::Var& embeddings, std::span<const int> labels,
                         double tau = kSupConTemperature);

struct MaskPlan {
  std::size_t batch = 0;
  std::size_t nmax = 0;
  std::vector<double> flags;         // [B, N], 1 = masked
  std::vector<std::size_t> rows;     // flat b * N + i of each masked token, ascending
  std::vector<double> targets;       // [rows.size(), kNumFeatures]

  std::size_t masked() const { return rows.size(); }
};

// round(rate * n_real) masked per jet (at least one when n_real >= 2).
MaskPlan make_mask_plan(const JetBatch& batch, std::mt19937_64& rng, double rate = kMaskRate);

// Copy of `batch` with pair features involving a masked particle set to zero,
// so the interaction bias does not reveal masked kinematics.
JetBatch hide_masked_pairs(const JetBatch& batch, const MaskPlan& plan);

// prediction [M, F]: squared error on the continuous features summed and divided
// by M, plus mean cross-entropy of the type logits against the one-hot target.
ad::Var mpm_loss(ad::Tape& t, const ad::Var& prediction, const MaskPlan& plan);

// 0.5 * sum_d (mu^2 + exp(lv) - lv - 1), averaged over the batch.
ad::Var kl_divergence(ad::Tape& t, const ad::Var& mu, const ad::Var& log_var);

struct VaeLoss {
  ad::Var total;
  ad::Var recon;
  ad::Var kl;
};

// recon [B, N, F] compared to batch.features on real particles only.
VaeLoss vae_loss(ad::Tape& t, const ad::Var& mu, const ad::Var& log_var, const ad::Var& recon,
                 const JetBatch& batch, double beta = 1.0);

ad::Var cross_entropy_loss(ad::Tape& t, const ad::Var& logits, std::span<const int> labels);

}  // namespace jetbench
