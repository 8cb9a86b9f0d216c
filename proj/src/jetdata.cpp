// SPDX-License-Identifier: Apache-2.0

#include "jetbench/jetdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace jetbench {
namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "bb", "tauh_taue", "tauh_taumu", "tauh_tauh", "qqb_bcs", "qq", "QCD"};

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

bool finite(const FourMomentum& p) {
  return std::isfinite(p.px) && std::isfinite(p.py) && std::isfinite(p.pz) &&
         std::isfinite(p.energy);
}

}  // namespace

std::string_view class_name(ClassLabel c) { return kClassNames.at(index(c)); }

std::optional<ClassLabel> class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == name) return class_at(i);
  return std::nullopt;
}

FourMomentum Jet::momentum() const {
  FourMomentum total;
  for (const auto& p : particles) total += p.p;
  return total;
}

Kinematics kinematics(const FourMomentum& p) {
  Kinematics k;
  k.pt = std::hypot(p.px, p.py);
  k.phi = std::atan2(p.py, p.px);
  if (k.phi <= -std::numbers::pi) k.phi = std::numbers::pi;
  double e = p.energy;
  if (e <= std::abs(p.pz)) {
    e = std::abs(p.pz) + 1e-12;
    k.clamped = true;
  }
  k.rapidity = 0.5 * std::log((e + p.pz) / (e - p.pz));
  const double p2 = p.px * p.px + p.py * p.py + p.pz * p.pz;
  k.mass = std::sqrt(std::max(0.0, p.energy * p.energy - p2));
  return k;
}

FourMomentum from_pt_y_phi_m(double pt, double rapidity, double phi, double mass) {
  const double mt = std::sqrt(pt * pt + mass * mass);
  return {pt * std::cos(phi), pt * std::sin(phi), mt * std::sinh(rapidity),
          mt * std::cosh(rapidity)};
}

double wrap_phi(double dphi) {
  dphi = std::remainder(dphi, 2.0 * std::numbers::pi);
  if (dphi <= -std::numbers::pi) dphi += 2.0 * std::numbers::pi;
  return dphi;
}

double delta_r(const Kinematics& a, const Kinematics& b) {
  const double dy = a.rapidity - b.rapidity;
  const double dphi = wrap_phi(a.phi - b.phi);
  return std::sqrt(dy * dy + dphi * dphi);
}

bool is_physical(const Particle& particle) {
  const auto& p = particle.p;
  if (!finite(p) || p.energy < 0.0) return false;
  const double e2 = p.energy * p.energy;
  const double p2 = p.px * p.px + p.py * p.py + p.pz * p.pz;
  return e2 >= p2 - 1e-6 * e2;
}

Jet normalize_jet(const Jet& jet) {
  const double pt = kinematics(jet.momentum()).pt;
  if (!(pt > 0.0) || !std::isfinite(pt))
    throw RecordError("cannot normalize a jet with transverse momentum " + std::to_string(pt));
  const double s = kTargetJetPt / pt;
  Jet out = jet;
  for (auto& part : out.particles) {
    part.p.px *= s;
    part.p.py *= s;
    part.p.pz *= s;
    part.p.energy *= s;
  }
  return out;
}

SanitizeResult sanitize(const Jet& jet, const Jet& original) {
  if (jet.particles.size() != original.particles.size())
    throw std::invalid_argument("sanitize: augmented jet has " +
                                std::to_string(jet.particles.size()) +
                                " particles, original has " +
                                std::to_string(original.particles.size()));
  SanitizeResult r{jet, 0};
  for (std::size_t i = 0; i < jet.particles.size(); ++i) {
    if (is_physical(jet.particles[i])) continue;
    r.jet.particles[i] = original.particles[i];
    ++r.reverted;
  }
  return r;
}

PairFeatures pairwise_features(const Particle& a, const Particle& b) {
  const Kinematics ka = kinematics(a);
  const Kinematics kb = kinematics(b);
  const double dr = delta_r(ka, kb);
  const double pt_min = std::min(ka.pt, kb.pt);
  const double pt_sum = ka.pt + kb.pt;
  const double z = pt_sum > 0.0 ? pt_min / pt_sum : 0.0;
  const double e = a.p.energy + b.p.energy;
  const double px = a.p.px + b.p.px, py = a.p.py + b.p.py, pz = a.p.pz + b.p.pz;
  const double m2 = e * e - (px * px + py * py + pz * pz);
  return {safe_log(dr), safe_log(pt_min * dr), safe_log(z), safe_log(m2)};
}

std::array<double, kNumFeatures> particle_features(const Particle& p, const Kinematics& axis) {
  const Kinematics k = kinematics(p);
  std::array<double, kNumFeatures> f{};
  const double dy = k.rapidity - axis.rapidity;
  const double dphi = wrap_phi(k.phi - axis.phi);
  f[0] = dy;
  f[1] = dphi;
  f[2] = safe_log(k.pt);
  f[3] = safe_log(p.p.energy);
  f[4] = std::sqrt(dy * dy + dphi * dphi);
  f[kNumContinuousFeatures + static_cast<std::size_t>(p.type)] = 1.0;
  return f;
}

std::size_t batch_width(std::span<const Jet> jets, std::size_t nmax) {
  std::size_t w = 0;
  for (const auto& j : jets) w = std::max(w, j.particles.size());
  return std::min(w, nmax);
}

JetBatch build_batch(std::span<const Jet> jets, std::size_t nmax) {
  if (jets.empty()) throw std::invalid_argument("build_batch: no jets");
  if (nmax == 0) throw std::invalid_argument("build_batch: nmax must be positive");
  JetBatch out;
  out.batch = jets.size();
  out.nmax = nmax;
  out.features.assign(out.batch * nmax * kNumFeatures, 0.0);
  out.mask.assign(out.batch * nmax, 0.0);
  out.interactions.assign(out.batch * kNumPairFeatures * nmax * nmax, 0.0);
  out.labels.resize(out.batch);
  out.counts.resize(out.batch);
  const double sentinel = std::log(kLogFloor);

  for (std::size_t b = 0; b < jets.size(); ++b) {
    const Jet& jet = jets[b];
    if (jet.particles.empty())
      throw RecordError("build_batch: jet " + std::to_string(b) + " has no particles");
    std::vector<std::size_t> order(jet.particles.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> pts(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      pts[i] = std::hypot(jet.particles[i].p.px, jet.particles[i].p.py);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return pts[l] > pts[r]; });

    // Summed in pT order so the axis does not depend on input order.
    FourMomentum total;
    for (auto i : order) total += jet.particles[i].p;
    const Kinematics axis = kinematics(total);

    const std::size_t n = std::min(order.size(), nmax);
    out.labels[b] = static_cast<int>(index(jet.label));
    out.counts[b] = n;
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = particle_features(jet.particles[order[i]], axis);
      std::copy(f.begin(), f.end(), out.features.begin() + (b * nmax + i) * kNumFeatures);
      out.mask[b * nmax + i] = 1.0;
    }
    auto at = [&](std::size_t c, std::size_t i, std::size_t j) -> double& {
      return out.interactions[((b * kNumPairFeatures + c) * nmax + i) * nmax + j];
    };
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < kNumPairFeatures; ++c) at(c, i, i) = sentinel;
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto pf = pairwise_features(jet.particles[order[i]], jet.particles[order[j]]);
        const std::array<double, kNumPairFeatures> v = {pf.ln_delta_r, pf.ln_kt, pf.ln_z,
                                                        pf.ln_m2};
        for (std::size_t c = 0; c < kNumPairFeatures; ++c) at(c, i, j) = at(c, j, i) = v[c];
      }
    }
  }
  return out;
}

}  // namespace jetbench
