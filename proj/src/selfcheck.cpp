// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>

#include "jetbench/objectives.hpp"
#include "jetbench/optim.hpp"
#include "jetbench/runner.hpp"

namespace jetbench {
namespace {

EncoderConfig tiny_config() {
  EncoderConfig c = EncoderConfig::desk();
  c.embed_hidden = 12;
  c.latent_dim = 8;
  c.n_particle_blocks = 1;
  c.n_class_blocks = 1;
  c.n_heads = 2;
  c.interaction_hidden = 4;
  c.readout_hidden = 8;
  return c;
}

std::vector<Jet> sample_jets(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Jet> jets;
  for (std::size_t i = 0; i < n; ++i) {
    Jet j = normalize_jet(generate_toy_jet(static_cast<ClassLabel>(i % kNumClasses), rng));
    j.particles.resize(std::min<std::size_t>(j.particles.size(), 6));
    jets.push_back(normalize_jet(j));
  }
  return jets;
}

// Largest relative error between backprop and central differences over
// `probes` coordinates of `param`.
double fd_error(const std::function<ad::Var(ad::Tape&)>& loss_fn, const ad::Var& param,
                std::size_t probes) {
  ad::Tape t;
  param->zero_grad();
  t.backward(loss_fn(t));
  const auto analytic = param->grad;
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t i = (k * 7919) % param->size();
    const double keep = param->value[i];
    ad::Tape tp, tm;
    tp.set_enabled(false);
    tm.set_enabled(false);
    param->value[i] = keep + h;
    const double fp = loss_fn(tp)->item();
    param->value[i] = keep - h;
    const double fm = loss_fn(tm)->item();
    param->value[i] = keep;
    const double numeric = (fp - fm) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace

bool run_selfcheck(std::ostream& out) {
  bool all = true;
  auto report = [&](const char* name, double value, double limit) {
    const bool ok = value < limit;
    all = all && ok;
    out << (ok ? "[pass] " : "[FAIL] ") << std::left << std::setw(40) << name << std::scientific
        << std::setprecision(2) << value << " < " << limit << '\n';
  };

  const auto jets = sample_jets(4, 17);
  const auto batch = build_batch(jets, 6);
  JetModel model(tiny_config(), HeadSet{true, true, false, false}, 5);
  std::mt19937_64 rng(0);

  auto ce = [&](ad::Tape& t) {
    auto enc = model.forward_encoder(t, batch, false, rng);
    return cross_entropy_loss(t, model.classifier(t, enc.latent, false, rng), batch.labels);
  };
  double worst = 0.0;
  for (const char* name : {"encoder.embed.0.weight", "encoder.interaction.0.weight",
                           "encoder.block.0.attn.q.weight", "encoder.cls_token",
                           "head.classifier.0.weight"})
    worst = std::max(worst, fd_error(ce, model.params().get(name), 6));
  report("gradient: encoder + cross-entropy", worst, 1e-3);

  auto contrastive = [&](ad::Tape& t) {
    auto enc = model.forward_encoder(t, batch, false, rng);
    return ntxent_loss(t, model.projection(t, enc.latent));
  };
  report("gradient: encoder + NT-Xent",
         fd_error(contrastive, model.params().get("encoder.block.0.ffn.up.weight"), 6), 1e-3);

  auto latent = [&](const std::vector<Jet>& js, std::size_t nmax) {
    ad::Tape t;
    t.set_enabled(false);
    return model.forward_encoder(t, build_batch(js, nmax), false, rng).latent->value;
  };
  const auto base = latent(jets, 6);
  auto shuffled = jets;
  for (auto& j : shuffled) std::reverse(j.particles.begin(), j.particles.end());
  const auto perm = latent(shuffled, 6);
  const auto padded = latent(jets, 10);
  double dp = 0.0, dpad = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    dp = std::max(dp, std::abs(base[i] - perm[i]));
    dpad = std::max(dpad, std::abs(base[i] - padded[i]));
  }
  report("permutation invariance of latent", dp, 1e-9);
  report("padding invariance of latent", dpad, 1e-9);

  {
    ad::Tape t;
    auto same = ad::full({4, 3}, 1.0 / std::sqrt(3.0));
    report("NT-Xent closed form ln(2B-1)", std::abs(ntxent_loss(t, same)->item() - std::log(3.0)),
           1e-9);
  }

  {
    std::mt19937_64 g(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> m(32 * 32);
    for (auto& v : m) v = n(g);
    const auto x = newton_schulz5(m, 32, 32);
    double err = 0.0;
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 32; ++k) s += x[i * 32 + k] * x[j * 32 + k];
        err += (s - (i == j ? 1.0 : 0.0)) * (s - (i == j ? 1.0 : 0.0));
      }
    report("Newton-Schulz ||XX^T - I||_F / sqrt(n)", std::sqrt(err) / std::sqrt(32.0), 0.3);
  }
  return all;
}

}  // namespace jetbench
