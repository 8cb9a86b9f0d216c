// SPDX-License-Identifier: Apache-2.0

#include "jetbench/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace jetbench {
namespace {

constexpr double kExcluded = -1e30;

// Temperature-scaled log-softmax over similarities with the diagonal removed.
ad::Var similarity_log_probs(ad::Tape& t, const ad::Var& emb, double tau) {
  if (emb->shape.size() != 2) throw LossError("contrastive loss: embeddings must be [2B, D]");
  if (!(tau > 0.0)) throw LossError("contrastive loss: temperature must be positive");
  const std::size_t n = emb->dim(0);
  auto sim = ad::bmm(t, ad::reshape(t, emb, {1, n, emb->dim(1)}),
                     ad::reshape(t, emb, {1, n, emb->dim(1)}), true);
  auto logits = ad::scale(t, ad::reshape(t, sim, {n, n}), 1.0 / tau);
  std::vector<double> diag(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) diag[i * n + i] = kExcluded;
  return ad::log_softmax(t, ad::add_const(t, logits, diag));
}

void check_pairs(const ad::Var& emb) {
  if (emb->shape.size() != 2 || emb->dim(0) % 2 != 0)
    throw LossError("contrastive loss: expected [2B, D] embeddings");
  if (emb->dim(0) < 4) throw LossError("contrastive loss: degenerate batch, need B >= 2");
}

}  // namespace

ad::Var ntxent_loss(ad::Tape& t, const ad::Var& embeddings, double tau) {
  check_pairs(embeddings);
  const std::size_t n = embeddings->dim(0), half = n / 2;
  auto logp = similarity_log_probs(t, embeddings, tau);
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[i * n + (i + half) % n] = -1.0 / static_cast<double>(n);
  return ad::weighted_sum(t, logp, w);
}

SupConResult supcon_loss(ad::Tape& t, const ad::Var& embeddings, std::span<const int> labels,
                         double tau) {
  check_pairs(embeddings);
  const std::size_t n = embeddings->dim(0);
  if (labels.size() != n) throw LossError("supcon_loss: need one label per embedding row");
  std::vector<std::size_t> positives(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) ++positives[i];
  const std::size_t anchors =
      static_cast<std::size_t>(std::count_if(positives.begin(), positives.end(),
                                             [](std::size_t p) { return p > 0; }));
  if (anchors == 0) throw LossError("supcon_loss: no anchor has a positive; loss undefined");
  auto logp = similarity_log_probs(t, embeddings, tau);
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (positives[i] == 0) continue;
    const double wi = -1.0 / (static_cast<double>(positives[i]) * static_cast<double>(anchors));
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) w[i * n + j] = wi;
  }
  return {ad::weighted_sum(t, logp, w), n - anchors};
}

MaskPlan make_mask_plan(const JetBatch& batch, std::mt19937_64& rng, double rate) {
  if (!(rate > 0.0 && rate < 1.0)) throw LossError("make_mask_plan: rate must lie in (0, 1)");
  MaskPlan plan;
  plan.batch = batch.batch;
  plan.nmax = batch.nmax;
  plan.flags.assign(batch.batch * batch.nmax, 0.0);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const std::size_t real = batch.counts[b];
    std::size_t k = static_cast<std::size_t>(std::lround(rate * static_cast<double>(real)));
    if (real >= 2) k = std::max<std::size_t>(k, 1);
    std::vector<std::size_t> idx(real);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t m = 0; m < k; ++m) plan.flags[b * batch.nmax + idx[m]] = 1.0;
  }
  for (std::size_t r = 0; r < plan.flags.size(); ++r) {
    if (plan.flags[r] == 0.0) continue;
    plan.rows.push_back(r);
    plan.targets.insert(plan.targets.end(), batch.features.begin() + r * kNumFeatures,
                        batch.features.begin() + (r + 1) * kNumFeatures);
  }
  return plan;
}

JetBatch hide_masked_pairs(const JetBatch& batch, const MaskPlan& plan) {
  JetBatch out = batch;
  const std::size_t n = batch.nmax;
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (plan.flags[b * n + i] == 0.0 && plan.flags[b * n + j] == 0.0) continue;
        for (std::size_t c = 0; c < kNumPairFeatures; ++c)
          out.interactions[((b * kNumPairFeatures + c) * n + i) * n + j] = 0.0;
      }
  return out;
}

ad::Var mpm_loss(ad::Tape& t, const ad::Var& prediction, const MaskPlan& plan) {
  const std::size_t m = plan.masked();
  if (m == 0) throw LossError("mpm_loss: no masked tokens; loss undefined");
  if (prediction->shape != ad::Shape{m, kNumFeatures})
    throw ad::DimensionError("mpm_loss: prediction " + ad::shape_str(prediction->shape) +
                             " for " + std::to_string(m) + " masked tokens");
  std::vector<double> neg_target(m * kNumFeatures, 0.0), w_sq(m * kNumFeatures, 0.0);
  std::vector<double> w_ce(m * kNumParticleTypes, 0.0);
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t f = 0; f < kNumContinuousFeatures; ++f) {
      neg_target[r * kNumFeatures + f] = -plan.targets[r * kNumFeatures + f];
      w_sq[r * kNumFeatures + f] = inv;
    }
    const double* onehot = &plan.targets[r * kNumFeatures + kNumContinuousFeatures];
    const std::size_t type =
        static_cast<std::size_t>(std::max_element(onehot, onehot + kNumParticleTypes) - onehot);
    w_ce[r * kNumParticleTypes + type] = -inv;
  }
  auto sq = ad::weighted_sum(t, ad::square(t, ad::add_const(t, prediction, neg_target)), w_sq);
  auto type_logits = ad::slice_last(t, prediction, kNumContinuousFeatures, kNumFeatures);
  auto ce = ad::weighted_sum(t, ad::log_softmax(t, type_logits), w_ce);
  return ad::add(t, sq, ce);
}

ad::Var kl_divergence(ad::Tape& t, const ad::Var& mu, const ad::Var& log_var) {
  if (mu->shape != log_var->shape || mu->shape.size() != 2)
    throw ad::DimensionError("kl_divergence: mu and log_var must share a [B, dz] shape");
  const double half_mean = 0.5 / static_cast<double>(mu->dim(0));
  auto terms = ad::sub(t, ad::add(t, ad::square(t, mu), ad::exp(t, log_var)), log_var);
  auto total = ad::scale(t, ad::sum(t, terms), half_mean);
  return ad::add_scalar(t, total, -half_mean * static_cast<double>(mu->size()));
}

VaeLoss vae_loss(ad::Tape& t, const ad::Var& mu, const ad::Var& log_var, const ad::Var& recon,
                 const JetBatch& batch, double beta) {
  if (recon->shape != ad::Shape{batch.batch, batch.nmax, kNumFeatures})
    throw ad::DimensionError("vae_loss: reconstruction " + ad::shape_str(recon->shape) +
                             " does not match the batch");
  std::size_t real = 0;
  for (double m : batch.mask) real += m != 0.0 ? 1 : 0;
  const double inv = 1.0 / static_cast<double>(real * kNumFeatures);
  std::vector<double> neg_target(recon->size()), w(recon->size(), 0.0);
  for (std::size_t r = 0; r < batch.batch * batch.nmax; ++r)
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      neg_target[r * kNumFeatures + f] = -batch.features[r * kNumFeatures + f];
      if (batch.mask[r] != 0.0) w[r * kNumFeatures + f] = inv;
    }
  auto mse = ad::weighted_sum(t, ad::square(t, ad::add_const(t, recon, neg_target)), w);
  auto kl = kl_divergence(t, mu, log_var);
  return {ad::add(t, mse, ad::scale(t, kl, beta)), mse, kl};
}

ad::Var cross_entropy_loss(ad::Tape& t, const ad::Var& logits, std::span<const int> labels) {
  if (logits->shape.size() != 2 || logits->dim(0) != labels.size())
    throw ad::DimensionError("cross_entropy_loss: logits " + ad::shape_str(logits->shape) +
                             " for " + std::to_string(labels.size()) + " labels");
  const std::size_t n = labels.size(), c = logits->dim(1);
  std::vector<double> w(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw LossError("cross_entropy_loss: label " + std::to_string(labels[i]) +
                      " out of range");
    w[i * c + static_cast<std::size_t>(labels[i])] = -1.0 / static_cast<double>(n);
  }
  return ad::weighted_sum(t, ad::log_softmax(t, logits), w);
}

}  // namespace jetbench
