// SPDX-License-Identifier: Apache-2.0

#include "jetbench/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace jetbench {
namespace {

constexpr double kSoftRadius = 0.8;

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument(std::string(what) + ": probability must lie in [0, 1]");
}

void check_sigma(double s, const char* what) {
  if (!(s >= 0.0 && s <= 0.5))
    throw std::invalid_argument(std::string(what) + ": width must lie in [0, 0.5]");
}

FourMomentum with_mass(double px, double py, double pz, double mass) {
  return {px, py, pz, std::sqrt(px * px + py * py + pz * pz + mass * mass)};
}

}  // namespace

Jet rotate(const Jet& jet, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Jet out = jet;
  for (auto& part : out.particles) {
    const double px = part.p.px, py = part.p.py;
    part.p.px = c * px - s * py;
    part.p.py = s * px + c * py;
  }
  return out;
}

Jet translate(const Jet& jet, double d_rapidity, double d_phi) {
  if (std::abs(d_rapidity) > 1.0 || std::abs(d_phi) > std::numbers::pi)
    throw std::invalid_argument("translate: shift exceeds |dy| <= 1, |dphi| <= pi");
  const double ch = std::cosh(d_rapidity), sh = std::sinh(d_rapidity);
  Jet out = rotate(jet, d_phi);
  for (auto& part : out.particles) {
    const double e = part.p.energy, pz = part.p.pz;
    part.p.energy = e * ch + pz * sh;
    part.p.pz = pz * ch + e * sh;
  }
  return out;
}

Jet collinear_split(const Jet& jet, std::size_t index, double fraction, std::size_t nmax,
                    double min_pt) {
  if (index >= jet.particles.size())
    throw std::out_of_range("collinear_split: particle index out of range");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("collinear_split: fraction must lie in (0, 1)");
  const Particle& target = jet.particles[index];
  if (kinematics(target).pt < min_pt)
    throw std::invalid_argument("collinear_split: particle pT below the split threshold");
  if (jet.particles.size() >= nmax) return jet;
  Jet out = jet;
  const FourMomentum& p = target.p;
  const FourMomentum a{fraction * p.px, fraction * p.py, fraction * p.pz, fraction * p.energy};
  const FourMomentum b{p.px - a.px, p.py - a.py, p.pz - a.pz, p.energy - a.energy};
  out.particles[index].p = a;
  out.particles.push_back({b, target.type});
  return out;
}

Jet soft_add(const Jet& jet, std::size_t n_soft, double pt_scale, std::size_t nmax,
             std::mt19937_64& rng) {
  const Kinematics axis = kinematics(jet.momentum());
  if (!(pt_scale > 0.0) && n_soft > 0)
    throw std::invalid_argument("soft_add: pt_scale must be positive");
  if (pt_scale > 1e-3 * axis.pt)
    throw std::invalid_argument("soft_add: pt_scale exceeds 1e-3 of the jet pT");
  Jet out = jet;
  const std::size_t room = nmax > jet.particles.size() ? nmax - jet.particles.size() : 0;
  const std::size_t n = std::min(n_soft, room);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double pt = pt_scale * (1.0 - u(rng));  // (0, pt_scale]
    const double r = kSoftRadius * std::sqrt(u(rng));
    const double a = 2.0 * std::numbers::pi * u(rng);
    const auto type = u(rng) < 0.5 ? ParticleType::kPhoton : ParticleType::kNeutralHadron;
    out.particles.push_back(
        {from_pt_y_phi_m(pt, axis.rapidity + r * std::cos(a), axis.phi + r * std::sin(a), 0.0),
         type});
  }
  return out;
}

Jet smear(const Jet& jet, double sigma_pt_rel, double sigma_angle, std::mt19937_64& rng) {
  if (sigma_pt_rel == 0.0 && sigma_angle == 0.0) return jet;
  std::normal_distribution<double> gp(0.0, 1.0);
  Jet out = jet;
  for (auto& part : out.particles) {
    const Kinematics k = kinematics(part);
    const double pt = k.pt * (1.0 + sigma_pt_rel * gp(rng));
    const double y = k.rapidity + sigma_angle * gp(rng);
    const double phi = k.phi + sigma_angle * gp(rng);
    part.p = from_pt_y_phi_m(pt, y, phi, k.mass);
    if (pt < 0.0) part.p.energy = -1.0;  // unphysical; reverted below
  }
  return sanitize(out, jet).jet;
}

Jet noise(const Jet& jet, double sigma_rel, std::mt19937_64& rng) {
  if (sigma_rel == 0.0) return jet;
  std::normal_distribution<double> g(0.0, sigma_rel);
  Jet out = jet;
  for (auto& part : out.particles) {
    const double mass = kinematics(part).mass;
    part.p = with_mass(part.p.px * (1.0 + g(rng)), part.p.py * (1.0 + g(rng)),
                       part.p.pz * (1.0 + g(rng)), mass);
  }
  return sanitize(out, jet).jet;
}

Jet particle_dropout(const Jet& jet, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("particle_dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return jet;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Jet out;
  out.label = jet.label;
  for (const auto& p : jet.particles)
    if (u(rng) >= rate) out.particles.push_back(p);
  if (out.particles.empty()) {
    const auto hardest = std::max_element(
        jet.particles.begin(), jet.particles.end(),
        [](const Particle& a, const Particle& b) { return kinematics(a).pt < kinematics(b).pt; });
    out.particles.push_back(*hardest);
  }
  return out;
}

AugmentationPipeline AugmentationPipeline::identity(std::size_t nmax) {
  return {AugmentMode::kIdentity, {}, nmax};
}

AugmentationPipeline AugmentationPipeline::jetclr(std::size_t nmax) {
  return {AugmentMode::kJetClr,
          {RotateStep{}, TranslateStep{}, CollinearSplitStep{}, SoftAddStep{}},
          nmax};
}

AugmentationPipeline AugmentationPipeline::supcon_train(std::size_t nmax) {
  return {AugmentMode::kSupconTrain,
          {NoiseStep{}, SmearStep{}, DropoutStep{}, TranslateStep{1.0, 0.05, 0.05}},
          nmax};
}

AugmentationPipeline AugmentationPipeline::supcon_val(std::size_t nmax) {
  return {AugmentMode::kSupconVal, {NoiseStep{}, SmearStep{}}, nmax};
}

void AugmentationPipeline::validate() const {
  for (const auto& step : steps) {
    std::visit(
        [this](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          check_prob(s.prob, "augmentation");
          if (mode == AugmentMode::kSupconVal &&
              !(std::is_same_v<T, NoiseStep> || std::is_same_v<T, SmearStep>))
            throw std::invalid_argument(
                "supcon validation pipelines may only contain noise and smearing");
          if constexpr (std::is_same_v<T, TranslateStep>) {
            if (s.max_rapidity < 0.0 || s.max_rapidity > 1.0 || s.max_phi < 0.0 ||
                s.max_phi > std::numbers::pi)
              throw std::invalid_argument("translate: caps are |dy| <= 1, |dphi| <= pi");
          } else if constexpr (std::is_same_v<T, SoftAddStep>) {
            if (!(s.pt_scale_rel > 0.0 && s.pt_scale_rel <= 1e-3))
              throw std::invalid_argument("soft_add: pt scale must lie in (0, 1e-3] of jet pT");
          } else if constexpr (std::is_same_v<T, NoiseStep>) {
            check_sigma(s.sigma_rel, "noise");
          } else if constexpr (std::is_same_v<T, SmearStep>) {
            check_sigma(s.sigma_pt_rel, "smear");
            check_sigma(s.sigma_angle, "smear");
          } else if constexpr (std::is_same_v<T, DropoutStep>) {
            if (!(s.rate >= 0.0 && s.rate < 1.0))
              throw std::invalid_argument("particle dropout rate must lie in [0, 1)");
          }
        },
        step);
  }
}

Jet AugmentationPipeline::apply(const Jet& jet, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Jet cur = jet;
  for (const auto& step : steps) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if (u(rng) >= s.prob) return;
          if constexpr (std::is_same_v<T, RotateStep>) {
            cur = sanitize(rotate(cur, 2.0 * std::numbers::pi * u(rng)), cur).jet;
          } else if constexpr (std::is_same_v<T, TranslateStep>) {
            const double dy = s.max_rapidity * (2.0 * u(rng) - 1.0);
            const double dphi = s.max_phi * (2.0 * u(rng) - 1.0);
            cur = sanitize(translate(cur, dy, dphi), cur).jet;
          } else if constexpr (std::is_same_v<T, CollinearSplitStep>) {
            const std::size_t splits = 1 + static_cast<std::size_t>(u(rng) * s.max_splits);
            for (std::size_t k = 0; k < std::min(splits, s.max_splits); ++k) {
              std::vector<std::size_t> eligible;
              for (std::size_t i = 0; i < cur.particles.size(); ++i)
                if (kinematics(cur.particles[i]).pt >= s.min_pt) eligible.push_back(i);
              if (eligible.empty() || cur.particles.size() >= nmax) break;
              const std::size_t pick = eligible[static_cast<std::size_t>(u(rng) * eligible.size()) %
                                                eligible.size()];
              cur = collinear_split(cur, pick, 0.05 + 0.9 * u(rng), nmax, s.min_pt);
            }
          } else if constexpr (std::is_same_v<T, SoftAddStep>) {
            const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * s.max_particles);
            const double scale = s.pt_scale_rel * kinematics(cur.momentum()).pt;
            cur = soft_add(cur, std::min(n, s.max_particles), scale, nmax, rng);
          } else if constexpr (std::is_same_v<T, NoiseStep>) {
            cur = noise(cur, s.sigma_rel, rng);
          } else if constexpr (std::is_same_v<T, SmearStep>) {
            cur = smear(cur, s.sigma_pt_rel, s.sigma_angle, rng);
          } else if constexpr (std::is_same_v<T, DropoutStep>) {
            cur = particle_dropout(cur, s.rate, rng);
          }
        },
        step);
  }
  return cur;
}

std::pair<Jet, Jet> two_views(const Jet& jet, const AugmentationPipeline& pipeline,
                              std::mt19937_64& rng) {
  Jet a = pipeline.apply(jet, rng);
  Jet b = pipeline.apply(jet, rng);
  return {std::move(a), std::move(b)};
}

}  // namespace jetbench
