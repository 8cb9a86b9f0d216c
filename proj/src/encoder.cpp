// SPDX-License-Identifier: Apache-2.0

#include "jetbench/encoder.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "jetbench/sampler.hpp"

namespace jetbench {
namespace {

constexpr double kMaskedLogit = -1e30;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

#define JETBENCH_ENCODER_FIELDS(X) \
  X(input_features)                \
  X(embed_hidden)                  \
  X(latent_dim)                    \
  X(n_particle_blocks)             \
  X(n_class_blocks)                \
  X(n_heads)                       \
  X(ffn_expansion)                 \
  X(interaction_hidden)            \
  X(interaction_layers)            \
  X(use_geglu)                     \
  X(droppath_rate)                 \
  X(residual_scale)                \
  X(wide_readout)                  \
  X(readout_hidden)                \
  X(dropout)                       \
  X(proj_hidden)                   \
  X(proj_dim)                      \
  X(mpm_hidden)                    \
  X(vae_latent)                    \
  X(vae_hidden)                    \
  X(vae_slot_dim)

}  // namespace

EncoderConfig EncoderConfig::paper() { return {}; }

EncoderConfig EncoderConfig::paper_modified() {
  EncoderConfig c;
  c.use_geglu = true;
  c.ffn_expansion = 6;
  c.droppath_rate = 0.1;
  c.residual_scale = 0.9;
  c.wide_readout = true;
  return c;
}

EncoderConfig EncoderConfig::desk() {
  EncoderConfig c;
  c.embed_hidden = 64;
  c.latent_dim = 32;
  c.n_particle_blocks = 3;
  c.n_class_blocks = 1;
  c.n_heads = 4;
  c.ffn_expansion = 2;
  c.interaction_hidden = 8;
  c.dropout = 0.0;
  c.readout_hidden = 32;
  c.proj_hidden = 32;
  c.proj_dim = 32;
  c.mpm_hidden = 64;
  c.vae_latent = 16;
  c.vae_hidden = 32;
  return c;
}

EncoderConfig EncoderConfig::desk_modified() {
  EncoderConfig c = desk();
  c.use_geglu = true;
  c.ffn_expansion = 3;
  c.droppath_rate = 0.1;
  c.residual_scale = 0.9;
  c.wide_readout = true;
  return c;
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("encoder config: " + m); };
  if (input_features != kNumFeatures)
    fail("input_features must be " + std::to_string(kNumFeatures));
  if (embed_hidden == 0 || latent_dim == 0 || n_heads == 0 || ffn_expansion == 0 ||
      interaction_hidden == 0 || proj_hidden == 0 || proj_dim == 0 || mpm_hidden == 0 ||
      vae_latent == 0 || vae_hidden == 0 || vae_slot_dim == 0 || readout_hidden == 0)
    fail("widths must be positive");
  if (latent_dim % n_heads != 0) fail("latent_dim must be divisible by n_heads");
  if (n_particle_blocks == 0 || n_class_blocks == 0) fail("need at least one block of each kind");
  if (interaction_layers < 1) fail("interaction_layers must be >= 1");
  if (!(droppath_rate >= 0.0 && droppath_rate < 1.0)) fail("droppath_rate must lie in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(residual_scale > 0.0)) fail("residual_scale must be positive");
}

std::string EncoderConfig::canonical() const {
  std::ostringstream os;
  os << std::setprecision(17);
#define X(f) os << #f << '=' << f << '\n';
  JETBENCH_ENCODER_FIELDS(X)
#undef X
  return os.str();
}

std::uint64_t EncoderConfig::hash() const { return fnv1a(canonical()); }

nlohmann::json to_json(const EncoderConfig& c) {
  nlohmann::json j;
#define X(f) j[#f] = c.f;
  JETBENCH_ENCODER_FIELDS(X)
#undef X
  return j;
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  std::set<std::string> known;
#define X(f)                               \
  known.insert(#f);                        \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
  JETBENCH_ENCODER_FIELDS(X)
#undef X
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("encoder config: unknown key '" + key + "'");
  c.validate();
  return c;
}

ad::Var ParamStore::add(const std::string& name, ad::Shape shape) {
  if (contains(name)) throw std::logic_error("duplicate parameter " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, ad::zeros(std::move(shape), true));
  return items_.back().second;
}

const ad::Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return items_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : items_) n += v->size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, v] : items_) v->zero_grad();
}

std::vector<double> slot_encoding(std::size_t slots, std::size_t dim) {
  std::vector<double> out(slots * dim);
  for (std::size_t i = 0; i < slots; ++i)
    for (std::size_t k = 0; k < dim; ++k) {
      const double freq = std::pow(100.0, -static_cast<double>(k / 2 * 2) / dim);
      const double a = static_cast<double>(i) * freq;
      out[i * dim + k] = (k % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  return out;
}

JetModel::JetModel(EncoderConfig config, HeadSet heads, std::uint64_t seed)
    : config_(std::move(config)), heads_(heads) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.latent_dim, f = c.input_features;

  // Every tensor draws from its own stream keyed by name, so values depend only
  // on (seed, name) and not on which heads are attached.
  auto uniform = [&](const std::string& name, ad::Shape shape, std::size_t fan_in) {
    auto v = params_.add(name, std::move(shape));
    std::mt19937_64 rng(mix_seed(seed, fnv1a(name)));
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& x : v->value) x = u(rng);
  };
  auto normal = [&](const std::string& name, ad::Shape shape, double sd) {
    auto v = params_.add(name, std::move(shape));
    std::mt19937_64 rng(mix_seed(seed, fnv1a(name)));
    std::normal_distribution<double> g(0.0, sd);
    for (auto& x : v->value) x = g(rng);
  };
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    uniform(name + ".weight", {in, out}, in);
    uniform(name + ".bias", {out}, in);
  };
  auto layer_norm = [&](const std::string& name) {
    auto g = params_.add(name + ".gain", {d});
    std::fill(g->value.begin(), g->value.end(), 1.0);
    params_.add(name + ".bias", {d});
  };
  auto block = [&](const std::string& p) {
    layer_norm(p + ".norm1");
    for (const char* m : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) dense(p + m, d, d);
    layer_norm(p + ".norm2");
    const std::size_t inner = c.ffn_expansion * d;
    if (c.use_geglu) {
      uniform(p + ".ffn.gate", {d, inner}, d);
      uniform(p + ".ffn.value", {d, inner}, d);
    } else {
      dense(p + ".ffn.up", d, inner);
    }
    dense(p + ".ffn.down", inner, d);
  };

  dense("encoder.embed.0", f, c.embed_hidden);
  dense("encoder.embed.1", c.embed_hidden, c.embed_hidden);
  dense("encoder.embed.2", c.embed_hidden, d);
  for (std::size_t l = 0; l < c.interaction_layers; ++l) {
    const std::size_t in = l == 0 ? kNumPairFeatures : c.interaction_hidden;
    const std::size_t out = l + 1 == c.interaction_layers ? c.n_heads : c.interaction_hidden;
    dense("encoder.interaction." + std::to_string(l), in, out);
  }
  for (std::size_t b = 0; b < c.n_particle_blocks; ++b) block("encoder.block." + std::to_string(b));
  normal("encoder.cls_token", {1, 1, d}, 0.02);
  for (std::size_t b = 0; b < c.n_class_blocks; ++b)
    block("encoder.cls_block." + std::to_string(b));
  layer_norm("encoder.norm");

  if (heads_.classifier) {
    if (c.wide_readout) {
      dense("head.classifier.0", d, c.readout_hidden);
      dense("head.classifier.1", c.readout_hidden, kNumClasses);
    } else {
      dense("head.classifier.0", d, kNumClasses);
    }
  }
  if (heads_.projection) {
    dense("head.projection.0", d, c.proj_hidden);
    dense("head.projection.1", c.proj_hidden, c.proj_dim);
  }
  if (heads_.mpm) {
    normal("head.mpm.mask_token", {d}, 0.02);
    dense("head.mpm.0", d, c.mpm_hidden);
    dense("head.mpm.1", c.mpm_hidden, f);
  }
  if (heads_.vae) {
    dense("head.vae.mu", d, c.vae_latent);
    dense("head.vae.log_var", d, c.vae_latent);
    const std::size_t fan = c.vae_latent + c.vae_slot_dim;
    uniform("head.vae.dec.z", {c.vae_latent, c.vae_hidden}, fan);
    uniform("head.vae.dec.slot", {c.vae_slot_dim, c.vae_hidden}, fan);
    uniform("head.vae.dec.bias", {c.vae_hidden}, fan);
    dense("head.vae.dec.out", c.vae_hidden, f);
  }
}

ad::Var JetModel::dense(ad::Tape& t, const ad::Var& x, const std::string& name) const {
  return ad::linear(t, x, params_.get(name + ".weight"), params_.get(name + ".bias"));
}

ad::Var JetModel::norm(ad::Tape& t, const ad::Var& x, const std::string& name) const {
  return ad::layer_norm(t, x, params_.get(name + ".gain"), params_.get(name + ".bias"));
}

void JetModel::require(bool attached, const char* head) const {
  if (!attached) throw HeadError(std::string(head) + " head is not attached to this model");
}

ad::Var JetModel::embed_particles(ad::Tape& t, const JetBatch& batch) const {
  if (config_.input_features != kNumFeatures)
    throw ad::DimensionError("embed_particles: batch has " + std::to_string(kNumFeatures) +
                             " features, encoder expects " +
                             std::to_string(config_.input_features));
  const std::size_t b = batch.batch, n = batch.nmax, d = config_.latent_dim;
  auto x = ad::tensor({b, n, kNumFeatures}, batch.features);
  x = ad::gelu(t, dense(t, x, "encoder.embed.0"));
  x = ad::gelu(t, dense(t, x, "encoder.embed.1"));
  x = dense(t, x, "encoder.embed.2");
  std::vector<double> keep(b * n * d);
  for (std::size_t r = 0; r < b * n; ++r)
    std::fill_n(keep.begin() + r * d, d, batch.mask[r]);
  return ad::mul_const(t, x, keep);
}

ad::Var JetModel::embed_interactions(ad::Tape& t, const JetBatch& batch) const {
  const std::size_t b = batch.batch, n = batch.nmax;
  auto u = ad::tensor({b, kNumPairFeatures, n, n}, batch.interactions);
  auto x = ad::permute(t, u, {0, 2, 3, 1});
  for (std::size_t l = 0; l < config_.interaction_layers; ++l) {
    x = dense(t, x, "encoder.interaction." + std::to_string(l));
    if (l + 1 < config_.interaction_layers) x = ad::gelu(t, x);
  }
  return ad::permute(t, x, {0, 3, 1, 2});
}

std::vector<double> JetModel::key_mask(const JetBatch& batch, std::size_t queries,
                                       bool with_cls) const {
  const std::size_t b = batch.batch, n = batch.nmax, h = config_.n_heads;
  const std::size_t keys = n + (with_cls ? 1 : 0);
  std::vector<double> out(b * h * queries * keys, 0.0);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t j = 0; j < n; ++j) {
      if (batch.mask[s * n + j] != 0.0) continue;
      const std::size_t col = j + (with_cls ? 1 : 0);
      for (std::size_t hq = 0; hq < h * queries; ++hq)
        out[(s * h * queries + hq) * keys + col] = kMaskedLogit;
    }
  return out;
}

ad::Var JetModel::attention(ad::Tape& t, const std::string& prefix, const ad::Var& q_in,
                            const ad::Var& kv_in, const ad::Var& bias,
                            std::span<const double> mask) const {
  const std::size_t b = q_in->dim(0), nq = q_in->dim(1), nk = kv_in->dim(1);
  const std::size_t h = config_.n_heads, d = config_.latent_dim, dh = d / h;
  auto heads = [&](const ad::Var& x, std::size_t rows, const char* which) {
    auto y = dense(t, x, prefix + which);
    return ad::permute(t, ad::reshape(t, y, {b, rows, h, dh}), {0, 2, 1, 3});
  };
  auto q = heads(q_in, nq, ".attn.q");
  auto k = heads(kv_in, nk, ".attn.k");
  auto v = heads(kv_in, nk, ".attn.v");
  auto logits = ad::scale(t, ad::bmm(t, q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (bias) logits = ad::add(t, logits, bias);
  logits = ad::add_const(t, logits, mask);
  auto weights = ad::softmax(t, logits, 3);
  auto out = ad::bmm(t, weights, v);
  out = ad::reshape(t, ad::permute(t, out, {0, 2, 1, 3}), {b, nq, d});
  return dense(t, out, prefix + ".attn.o");
}

ad::Var JetModel::feed_forward(ad::Tape& t, const std::string& prefix, const ad::Var& x,
                               bool training, std::mt19937_64& rng) const {
  ad::Var hidden =
      config_.use_geglu
          ? ad::geglu(t, x, params_.get(prefix + ".ffn.gate"), params_.get(prefix + ".ffn.value"))
          : ad::gelu(t, dense(t, x, prefix + ".ffn.up"));
  auto out = dense(t, hidden, prefix + ".ffn.down");
  return ad::dropout(t, out, config_.dropout, rng, training);
}

ad::Var JetModel::particle_block(ad::Tape& t, std::size_t index, const ad::Var& x,
                                 const ad::Var& bias, std::span<const double> mask,
                                 bool training, std::mt19937_64& rng) const {
  const std::string p = "encoder.block." + std::to_string(index);
  const double rate = config_.droppath_rate, rs = config_.residual_scale;
  auto h = norm(t, x, p + ".norm1");
  auto a = ad::dropout(t, attention(t, p, h, h, bias, mask), config_.dropout, rng, training);
  auto y = ad::add(t, x, ad::drop_path(t, a, rate, rs, rng, training));
  auto f = feed_forward(t, p, norm(t, y, p + ".norm2"), training, rng);
  return ad::add(t, y, ad::drop_path(t, f, rate, rs, rng, training));
}

ad::Var JetModel::class_block(ad::Tape& t, std::size_t index, const ad::Var& cls,
                              const ad::Var& tokens, std::span<const double> mask,
                              bool training, std::mt19937_64& rng) const {
  const std::string p = "encoder.cls_block." + std::to_string(index);
  const double rate = config_.droppath_rate, rs = config_.residual_scale;
  auto z = norm(t, ad::concat(t, cls, tokens, 1), p + ".norm1");
  auto q = norm(t, cls, p + ".norm1");
  auto a = ad::dropout(t, attention(t, p, q, z, nullptr, mask), config_.dropout, rng, training);
  auto y = ad::add(t, cls, ad::drop_path(t, a, rate, rs, rng, training));
  auto f = feed_forward(t, p, norm(t, y, p + ".norm2"), training, rng);
  return ad::add(t, y, ad::drop_path(t, f, rate, rs, rng, training));
}

EncoderOutput JetModel::forward_encoder(ad::Tape& t, const JetBatch& batch, bool training,
                                        std::mt19937_64& rng,
                                        std::span<const double> mask_flags) const {
  const std::size_t b = batch.batch, n = batch.nmax, d = config_.latent_dim;
  auto x = embed_particles(t, batch);
  if (!mask_flags.empty()) {
    require(heads_.mpm, "mpm");
    x = ad::replace_rows(t, x, mask_flags, params_.get("head.mpm.mask_token"));
  }
  auto bias = embed_interactions(t, batch);
  const auto pmask = key_mask(batch, n, false);
  for (std::size_t i = 0; i < config_.n_particle_blocks; ++i)
    x = particle_block(t, i, x, bias, pmask, training, rng);
  auto cls = ad::repeat_leading(t, params_.get("encoder.cls_token"), b);
  const auto cmask = key_mask(batch, 1, true);
  for (std::size_t i = 0; i < config_.n_class_blocks; ++i)
    cls = class_block(t, i, cls, x, cmask, training, rng);
  auto latent = ad::reshape(t, norm(t, cls, "encoder.norm"), {b, d});
  return {x, latent};
}

ad::Var JetModel::classifier(ad::Tape& t, const ad::Var& latent, bool training,
                             std::mt19937_64& rng) const {
  require(heads_.classifier, "classifier");
  if (!config_.wide_readout) return dense(t, latent, "head.classifier.0");
  auto h = ad::gelu(t, dense(t, latent, "head.classifier.0"));
  h = ad::dropout(t, h, config_.dropout, rng, training);
  return dense(t, h, "head.classifier.1");
}

ad::Var JetModel::projection(ad::Tape& t, const ad::Var& latent) const {
  require(heads_.projection, "projection");
  auto h = ad::relu(t, dense(t, latent, "head.projection.0"));
  return ad::l2_normalize_rows(t, dense(t, h, "head.projection.1"));
}

ad::Var JetModel::mpm_decoder(ad::Tape& t, const ad::Var& masked_tokens) const {
  require(heads_.mpm, "mpm");
  auto h = ad::gelu(t, dense(t, masked_tokens, "head.mpm.0"));
  return dense(t, h, "head.mpm.1");
}

VaeOutput JetModel::vae_head(ad::Tape& t, const ad::Var& latent, std::span<const double> noise,
                             std::size_t nmax) const {
  require(heads_.vae, "vae");
  const std::size_t b = latent->dim(0), dz = config_.vae_latent;
  if (noise.size() != b * dz)
    throw ad::DimensionError("vae_head: expected " + std::to_string(b * dz) + " noise values");
  auto mu = dense(t, latent, "head.vae.mu");
  auto log_var = dense(t, latent, "head.vae.log_var");
  auto sd = ad::exp(t, ad::scale(t, log_var, 0.5));
  auto z = ad::add(t, mu, ad::mul_const(t, sd, noise));
  auto hz = ad::linear(t, z, params_.get("head.vae.dec.z"), params_.get("head.vae.dec.bias"));
  auto slots = ad::tensor({nmax, config_.vae_slot_dim}, slot_encoding(nmax, config_.vae_slot_dim));
  auto hs = ad::matmul(t, slots, params_.get("head.vae.dec.slot"));
  auto h = ad::gelu(t, ad::outer_add(t, hz, hs));
  return {mu, log_var, dense(t, h, "head.vae.dec.out")};
}

}  // namespace jetbench
