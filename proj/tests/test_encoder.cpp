// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fd_oracle.hpp"
#include "tiny_model.hpp"

using namespace jetbench;
using namespace jetbench::testing;

namespace {

// Parameter count written out from the architecture description.
std::size_t expected_params(const EncoderConfig& c, const HeadSet& h) {
  const std::size_t d = c.latent_dim, f = c.input_features, e = c.embed_hidden;
  auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
  std::size_t n = dense(f, e) + dense(e, e) + dense(e, d);
  for (std::size_t l = 0; l < c.interaction_layers; ++l)
    n += dense(l == 0 ? 4 : c.interaction_hidden,
               l + 1 == c.interaction_layers ? c.n_heads : c.interaction_hidden);
  const std::size_t inner = c.ffn_expansion * d;
  const std::size_t ffn = c.use_geglu ? 2 * d * inner + dense(inner, d) : dense(d, inner) + dense(inner, d);
  const std::size_t block = 2 * (2 * d) + 4 * dense(d, d) + ffn;
  n += (c.n_particle_blocks + c.n_class_blocks) * block + d + 2 * d;
  if (h.classifier)
    n += c.wide_readout ? dense(d, c.readout_hidden) + dense(c.readout_hidden, 7) : dense(d, 7);
  if (h.projection) n += dense(d, c.proj_hidden) + dense(c.proj_hidden, c.proj_dim);
  if (h.mpm) n += d + dense(d, c.mpm_hidden) + dense(c.mpm_hidden, f);
  if (h.vae)
    n += 2 * dense(d, c.vae_latent) + (c.vae_latent + c.vae_slot_dim + 1) * c.vae_hidden +
         dense(c.vae_hidden, f);
  return n;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

JetBatch batch_of(const std::vector<Jet>& jets, std::size_t nmax) { return build_batch(jets, nmax); }

std::vector<double> latent(const JetModel& m, const JetBatch& b) {
  ad::Tape t;
  t.set_enabled(false);
  std::mt19937_64 rng(0);
  return m.forward_encoder(t, b, false, rng).latent->value;
}

}  // namespace

TEST_CASE("parameter counts follow the architecture") {
  const HeadSet all{true, true, true, true};
  for (const auto& c : {EncoderConfig::desk(), EncoderConfig::desk_modified(), tiny_config(),
                        tiny_config(true)}) {
    JetModel m(c, all, 1);
    CHECK(m.params().scalar_count() == expected_params(c, all));
    JetModel bare(c, HeadSet{}, 1);
    CHECK(bare.params().scalar_count() == expected_params(c, HeadSet{}));
  }
  const auto p = EncoderConfig::paper();
  CHECK(p.embed_hidden == 512);
  CHECK(p.latent_dim == 128);
  CHECK(p.n_particle_blocks == 8);
  CHECK(p.n_class_blocks == 2);
  CHECK(p.n_heads == 8);
  CHECK(p.interaction_layers == 4);
  CHECK(expected_params(p, HeadSet{true}) == JetModel(p, HeadSet{true}, 1).params().scalar_count());
}

TEST_CASE("initialization depends only on seed and name") {
  const auto c = tiny_config();
  JetModel a(c, HeadSet{true}, 3), b(c, HeadSet{true, true, true, true}, 3), other(c, HeadSet{true}, 4);
  for (const auto& [name, v] : a.params().items()) {
    CHECK(b.params().get(name)->value == v->value);
    if (name.ends_with(".weight")) CHECK(other.params().get(name)->value != v->value);
  }
}

TEST_CASE("particle embedding") {
  const auto c = tiny_config();
  JetModel m(c, HeadSet{}, 2);
  JetBatch zero;
  zero.batch = 1;
  zero.nmax = 3;
  zero.features.assign(3 * kNumFeatures, 0.0);
  zero.mask.assign(3, 1.0);
  zero.interactions.assign(4 * 9, 0.0);
  zero.labels = {0};
  zero.counts = {3};
  ad::Tape t;
  auto e = m.embed_particles(t, zero);
  CHECK(e->shape == ad::Shape{1, 3, c.latent_dim});
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t k = 0; k < c.latent_dim; ++k)
      CHECK(e->value[i * c.latent_dim + k] == e->value[k]);

  // Rows permute with the input.
  const auto jets = small_jets(2, 5);
  auto b = batch_of(jets, 6);
  auto swapped = b;
  for (std::size_t f = 0; f < kNumFeatures; ++f)
    std::swap(swapped.features[0 * kNumFeatures + f], swapped.features[1 * kNumFeatures + f]);
  auto x = m.embed_particles(t, b)->value, y = m.embed_particles(t, swapped)->value;
  const auto d = c.latent_dim;
  for (std::size_t k = 0; k < d; ++k) {
    CHECK(x[k] == y[d + k]);
    CHECK(x[d + k] == y[k]);
  }
}

TEST_CASE("interaction embedding") {
  const auto c = tiny_config();
  JetModel m(c, HeadSet{}, 3);
  const auto b = batch_of(small_jets(2, 6), 6);
  ad::Tape t;
  auto u = m.embed_interactions(t, b);
  CHECK(u->shape == ad::Shape{2, c.n_heads, 6, 6});
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t h = 0; h < c.n_heads; ++h)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
          auto at = [&](std::size_t a, std::size_t z) { return u->value[((s * c.n_heads + h) * 6 + a) * 6 + z]; };
          CHECK(at(i, j) == at(j, i));
        }
  // Identical pair features give identical bias vectors (pairs (0,1) and (1,0)).
  auto w = m.params().get("encoder.interaction.0.weight");
  auto loss = [&](ad::Tape& tt) {
    const auto probe = probe_weights(2 * c.n_heads * 36, 9);
    return ad::weighted_sum(tt, m.embed_interactions(tt, b), probe);
  };
  CHECK(fd_max_error(loss, w) < 1e-4);
  CHECK(fd_max_error(loss, m.params().get("encoder.interaction.3.bias")) < 1e-4);
}

TEST_CASE("attention bias shift and single-particle invariance") {
  const auto c = tiny_config();
  JetModel m(c, HeadSet{}, 4);
  const auto b = batch_of(small_jets(3, 7), 6);
  std::mt19937_64 rng(0);
  ad::Tape t;
  auto x = m.embed_particles(t, b);
  auto bias = m.embed_interactions(t, b);
  const auto mask = m.key_mask(b, 6, false);
  auto base = m.particle_block(t, 0, x, bias, mask, false, rng)->value;
  std::vector<double> shift(bias->size(), 0.0);
  // Constant per head.
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = 3.5 * double(i / 36 % c.n_heads);
  auto moved = m.particle_block(t, 0, x, ad::add_const(t, bias, shift), mask, false, rng)->value;
  CHECK(max_abs_diff(base, moved) < 1e-12);

  // A lone particle attends only to itself whatever the bias.
  Jet lone = small_jets(1, 8)[0];
  lone.particles.resize(1);
  const auto lb = batch_of({lone}, 4);
  auto lx = m.embed_particles(t, lb);
  const auto lm = m.key_mask(lb, 4, false);
  auto zero_bias = ad::zeros({1, c.n_heads, 4, 4});
  auto r1 = m.particle_block(t, 0, lx, zero_bias, lm, false, rng)->value;
  auto rb = ad::full({1, c.n_heads, 4, 4}, 0.0);
  for (std::size_t i = 0; i < rb->size(); ++i) rb->value[i] = std::sin(double(i));
  auto r2 = m.particle_block(t, 0, lx, rb, lm, false, rng)->value;
  for (std::size_t k = 0; k < c.latent_dim; ++k) CHECK(std::abs(r1[k] - r2[k]) < 1e-12);
}

TEST_CASE("particle block is permutation equivariant") {
  const auto c = tiny_config();
  JetModel m(c, HeadSet{}, 5);
  const auto b = batch_of(small_jets(2, 9), 6);
  const std::size_t n = 6, d = c.latent_dim, h = c.n_heads;
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  JetBatch p = b;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < kNumFeatures; ++f)
        p.features[(s * n + i) * kNumFeatures + f] = b.features[(s * n + perm[i]) * kNumFeatures + f];
      p.mask[s * n + i] = b.mask[s * n + perm[i]];
      for (std::size_t ch = 0; ch < kNumPairFeatures; ++ch)
        for (std::size_t j = 0; j < n; ++j)
          p.interactions[((s * kNumPairFeatures + ch) * n + i) * n + j] =
              b.interactions[((s * kNumPairFeatures + ch) * n + perm[i]) * n + perm[j]];
    }
  std::mt19937_64 rng(0);
  ad::Tape t;
  auto run = [&](const JetBatch& bb) {
    return m.particle_block(t, 0, m.embed_particles(t, bb), m.embed_interactions(t, bb),
                            m.key_mask(bb, n, false), false, rng)->value;
  };
  const auto y = run(b), yp = run(p);
  double worst = 0.0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k)
        worst = std::max(worst, std::abs(yp[(s * n + i) * d + k] - y[(s * n + perm[i]) * d + k]));
  CHECK(worst < 1e-12);
  (void)h;
}

TEST_CASE("pooled latent invariances") {
  for (bool modified : {false, true}) {
    const auto c = tiny_config(modified);
    JetModel m(c, HeadSet{true}, 6);
    auto jets = small_jets(5, 10);
    const auto base = latent(m, batch_of(jets, 6));
    auto shuffled = jets;
    std::mt19937_64 rng(1);
    for (auto& j : shuffled) std::shuffle(j.particles.begin(), j.particles.end(), rng);
    CHECK(max_abs_diff(base, latent(m, batch_of(shuffled, 6))) < 1e-9);
    CHECK(max_abs_diff(base, latent(m, batch_of(jets, 11))) < 1e-9);
    // Bitwise determinism in inference mode.
    CHECK(base == latent(m, batch_of(jets, 6)));
    // Training mode with dropout or drop-path depends on the rng.
    if (c.dropout > 0.0 || c.droppath_rate > 0.0) {
      ad::Tape t;
      std::mt19937_64 r1(1), r2(2);
      auto a = m.forward_encoder(t, batch_of(jets, 6), true, r1).latent->value;
      auto b = m.forward_encoder(t, batch_of(jets, 6), true, r2).latent->value;
      CHECK(a != b);
    }
  }
}

TEST_CASE("classifier head") {
  const auto c = tiny_config();
  JetModel m(c, HeadSet{true}, 7);
  std::mt19937_64 rng(0);
  for (const auto& [name, v] : m.params().items())
    if (name.starts_with("head.classifier")) std::fill(v->value.begin(), v->value.end(), 0.0);
  ad::Tape t;
  auto lat = ad::full({3, c.latent_dim}, 0.7);
  auto logits = m.classifier(t, lat, false, rng);
  CHECK(logits->shape == ad::Shape{3, kNumClasses});
  for (double v : logits->value) CHECK(v == 0.0);
  auto p = ad::softmax(t, logits, 1);
  for (double v : p->value) CHECK(v == doctest::Approx(1.0 / 7.0));

  JetModel bare(c, HeadSet{}, 7);
  CHECK_THROWS_AS(bare.classifier(t, lat, false, rng), HeadError);
  CHECK_THROWS_AS(bare.projection(t, lat), HeadError);
  CHECK_THROWS_AS(bare.mpm_decoder(t, lat), HeadError);
}

TEST_CASE("projection head") {
  const auto c = tiny_config();
  JetModel m(c, HeadSet{false, true}, 8);
  std::mt19937_64 rng(1);
  auto lat = random_leaf({4, c.latent_dim}, rng);
  ad::Tape t;
  auto z = m.projection(t, lat);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < c.proj_dim; ++k) s += z->value[r * c.proj_dim + k] * z->value[r * c.proj_dim + k];
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-12);
  }
  auto zz = m.projection(t, ad::zeros({3, c.latent_dim}));
  for (std::size_t k = 0; k < c.proj_dim; ++k) {
    CHECK(zz->value[k] == zz->value[c.proj_dim + k]);
    CHECK(zz->value[k] == zz->value[2 * c.proj_dim + k]);
  }
  auto loss = [&](ad::Tape& tt) {
    return ad::weighted_sum(tt, m.projection(tt, lat), probe_weights(4 * c.proj_dim, 2));
  };
  CHECK(fd_max_error(loss, lat) < 1e-4);
  CHECK(fd_max_error(loss, m.params().get("head.projection.0.weight")) < 1e-4);
}

TEST_CASE("reconstruction heads") {
  const auto c = tiny_config();
  JetModel m(c, HeadSet{false, false, true, true}, 9);
  std::mt19937_64 rng(2);
  ad::Tape t;
  auto rows = random_leaf({5, c.latent_dim}, rng);
  CHECK(m.mpm_decoder(t, rows)->shape == ad::Shape{5, kNumFeatures});

  auto lat = random_leaf({3, c.latent_dim}, rng);
  const auto noise = probe_weights(3 * c.vae_latent, 4);
  auto out = m.vae_head(t, lat, noise, 6);
  CHECK(out.mu->shape == ad::Shape{3, c.vae_latent});
  CHECK(out.recon->shape == ad::Shape{3, 6, kNumFeatures});
  CHECK_THROWS_AS(m.vae_head(t, lat, std::vector<double>(2), 6), ad::DimensionError);

  // Gradient through the reparameterized sample with frozen noise.
  auto loss = [&](ad::Tape& tt) {
    auto o = m.vae_head(tt, lat, noise, 6);
    return ad::weighted_sum(tt, o.recon, probe_weights(o.recon->size(), 5));
  };
  CHECK(fd_max_error(loss, m.params().get("head.vae.mu.bias")) < 1e-4);
  CHECK(fd_max_error(loss, m.params().get("head.vae.log_var.weight")) < 1e-4);
  CHECK(fd_max_error(loss, m.params().get("head.vae.dec.slot")) < 1e-4);
}

TEST_CASE("slot encoding") {
  const auto s = slot_encoding(5, 4);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 1.0);
  CHECK(s[1 * 4 + 0] == doctest::Approx(std::sin(1.0)));
  CHECK(s[3 * 4 + 2] == doctest::Approx(std::sin(3.0 * std::pow(100.0, -0.5))));
  CHECK(s[3 * 4 + 3] == doctest::Approx(std::cos(3.0 * std::pow(100.0, -0.5))));
}

TEST_CASE("encoder config") {
  const auto c = EncoderConfig::desk_modified();
  CHECK(encoder_config_from_json(to_json(c)) == c);
  CHECK(c.hash() != EncoderConfig::desk().hash());
  CHECK(c.hash() == EncoderConfig::desk_modified().hash());
  auto j = to_json(c);
  j["colour"] = 3;
  CHECK_THROWS(encoder_config_from_json(j));
  auto bad = c;
  bad.n_heads = 5;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.droppath_rate = 1.0;
  CHECK_THROWS(bad.validate());

  const auto pm = EncoderConfig::paper_modified();
  CHECK(pm.use_geglu);
  CHECK(pm.wide_readout);
  CHECK(pm.droppath_rate > 0.0);
}

TEST_CASE("parameter store") {
  ParamStore s;
  s.add("a", {2, 3});
  s.add("b", {4});
  CHECK(s.scalar_count() == 10);
  CHECK(s.items()[0].first == "a");
  CHECK_THROWS(s.add("a", {1}));
  CHECK_THROWS_AS(s.get("c"), std::out_of_range);
}
