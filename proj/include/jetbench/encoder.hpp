// SPDX-License-Identifier: Apache-2.0
//
// Particle-cloud transformer backbone with a pairwise interaction bias on the
// attention logits, a class-token readout and the attachable heads used by the
// pretraining objectives and the classifier.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "jetbench/autodiff.hpp"
#include "jetbench/jetdata.hpp"

namespace jetbench {

struct EncoderConfig {
  std::size_t input_features = kNumFeatures;
  std::size_t embed_hidden = 512;
  std::size_t latent_dim = 128;
  std::size_t n_particle_blocks = 8;
  std::size_t n_class_blocks = 2;
  std::size_t n_heads = 8;
  std::size_t ffn_expansion = 4;
  std::size_t interaction_hidden = 64;
  std::size_t interaction_layers = 4;
  bool use_geglu = false;
  double droppath_rate = 0.0;
  double residual_scale = 1.0;
  bool wide_readout = false;
  std::size_t readout_hidden = 128;
  double dropout = 0.1;
  std::size_t proj_hidden = 128;
  std::size_t proj_dim = 128;
  std::size_t mpm_hidden = 256;
  std::size_t vae_latent = 32;
  std::size_t vae_hidden = 128;
  std::size_t vae_slot_dim = 8;

  static EncoderConfig paper();
  static EncoderConfig paper_modified();
  // Reduced widths and depth for single-core runs.
  static EncoderConfig desk();
  static EncoderConfig desk_modified();

  void validate() const;
  // One "key=value" line per field in declaration order.
  std::string canonical() const;
  // FNV-1a over canonical().
  std::uint64_t hash() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct HeadSet {
  bool classifier = false;
  bool projection = false;
  bool mpm = false;
  bool vae = false;
};

// Insertion-ordered named parameters.
class ParamStore {
 public:
  ad::Var add(const std::string& name, ad::Shape shape);
  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, ad::Var>> items_;
  std::map<std::string, std::size_t> index_;
};

struct EncoderOutput {
  ad::Var tokens;  // [B, N, D] after the particle blocks
  ad::Var latent;  // [B, D]
};

struct VaeOutput {
  ad::Var mu;       // [B, dz]
  ad::Var log_var;  // [B, dz]
  ad::Var recon;    // [B, N, F]
};

class HeadError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class JetModel {
 public:
  JetModel(EncoderConfig config, HeadSet heads, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  const HeadSet& heads() const { return heads_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // [B, N, D]; padded rows are zero.
  ad::Var embed_particles(ad::Tape& t, const JetBatch& batch) const;
  // [B, H, N, N].
  ad::Var embed_interactions(ad::Tape& t, const JetBatch& batch) const;
  // Additive key mask [B, H, Nq, N]: 0 for real keys, a large negative value for padding.
  std::vector<double> key_mask(const JetBatch& batch, std::size_t queries,
                               bool with_cls) const;

  ad::Var particle_block(ad::Tape& t, std::size_t index, const ad::Var& x, const ad::Var& bias,
                         std::span<const double> mask, bool training,
                         std::mt19937_64& rng) const;
  ad::Var class_block(ad::Tape& t, std::size_t index, const ad::Var& cls, const ad::Var& tokens,
                      std::span<const double> mask, bool training, std::mt19937_64& rng) const;

  // mask_flags [B, N] marks tokens replaced by the learned mask embedding (MPM).
  EncoderOutput forward_encoder(ad::Tape& t, const JetBatch& batch, bool training,
                                std::mt19937_64& rng,
                                std::span<const double> mask_flags = {}) const;

  ad::Var classifier(ad::Tape& t, const ad::Var& latent, bool training,
                     std::mt19937_64& rng) const;
  // Unit-norm rows.
  ad::Var projection(ad::Tape& t, const ad::Var& latent) const;
  // [M, D] -> [M, F].
  ad::Var mpm_decoder(ad::Tape& t, const ad::Var& masked_tokens) const;
  // noise holds B*dz standard normal draws for the reparameterized sample.
  VaeOutput vae_head(ad::Tape& t, const ad::Var& latent, std::span<const double> noise,
                     std::size_t nmax) const;

 private:
  ad::Var dense(ad::Tape& t, const ad::Var& x, const std::string& name) const;
  ad::Var norm(ad::Tape& t, const ad::Var& x, const std::string& name) const;
  ad::Var attention(ad::Tape& t, const std::string& prefix, const ad::Var& q_in,
                    const ad::Var& kv_in, const ad::Var& bias, std::span<const double> mask) const;
  ad::Var feed_forward(ad::Tape& t, const std::string& prefix, const ad::Var& x, bool training,
                       std::mt19937_64& rng) const;
  void require(bool attached, const char* head) const;

  EncoderConfig config_;
  HeadSet heads_;
  ParamStore params_;
};

// Fixed sinusoidal code for particle slot i (pT rank) in `dim` channels.
std::vector<double> slot_encoding(std::size_t slots, std::size_t dim);

}  // namespace jetbench
