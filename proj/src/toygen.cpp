// SPDX-License-Identifier: Apache-2.0
//
// Synthetic jets standing in for a real dataset. Classes differ in prong
// count, prong-pair mass, multiplicity and lepton content so that they are
// separable by construction.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jetbench/jetdata.hpp"

namespace jetbench {
namespace {

constexpr double kPionMass = 0.13957;
constexpr double kKaonMass = 0.497611;
constexpr double kElectronMass = 0.000511;
constexpr double kMuonMass = 0.105658;
constexpr std::size_t kMinParticles = 3;
constexpr std::size_t kMaxParticles = 100;

enum class ProngKind { kLight, kBottom, kTauHadronic, kElectron, kMuon, kGluonLike };

struct Prong {
  ProngKind kind;
  double share;  // fraction of jet pT
  double dy;     // offset from jet axis
  double dphi;
};

double type_mass(ParticleType t) {
  switch (t) {
    case ParticleType::kChargedHadron: return kPionMass;
    case ParticleType::kNeutralHadron: return kKaonMass;
    case ParticleType::kPhoton: return 0.0;
    case ParticleType::kElectron: return kElectronMass;
    case ParticleType::kMuon: return kMuonMass;
  }
  return 0.0;
}

ParticleType draw_type(std::mt19937_64& rng, const std::array<double, kNumParticleTypes>& w) {
  std::discrete_distribution<int> d(w.begin(), w.end());
  return static_cast<ParticleType>(d(rng));
}

class Builder {
 public:
  Builder(std::mt19937_64& rng, double jet_pt, double y0, double phi0)
      : rng_(rng), jet_pt_(jet_pt), y0_(y0), phi0_(phi0) {}

  void add(double pt, double dy, double dphi, ParticleType type) {
    if (!(pt > 0.0)) return;
    const double r = std::hypot(dy, dphi);
    if (r > 0.79) {  // keep everything inside the jet cone
      dy *= 0.79 / r;
      dphi *= 0.79 / r;
    }
    jet_.particles.push_back(
        {from_pt_y_phi_m(pt, y0_ + dy, phi0_ + dphi, type_mass(type)), type});
  }

  // Shower-like spray of `n` particles sharing `pt` around a prong direction.
  void spray(const Prong& pr, std::size_t n, double sigma,
             const std::array<double, kNumParticleTypes>& mix, double pt) {
    std::exponential_distribution<double> ex(1.0);
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& v : w) {
      v = std::pow(ex(rng_), 1.5);
      total += v;
    }
    for (std::size_t i = 0; i < n; ++i) add(pt * w[i] / total, pr.dy + g(rng_), pr.dphi + g(rng_), draw_type(rng_, mix));
  }

  void prong(const Prong& pr) {
    const double pt = pr.share * jet_pt_;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    switch (pr.kind) {
      case ProngKind::kLight: {
        std::poisson_distribution<int> mult(13.0);
        spray(pr, 1 + mult(rng_), 0.05, {0.62, 0.1, 0.26, 0.01, 0.01}, pt);
        break;
      }
      case ProngKind::kGluonLike: {
        std::poisson_distribution<int> mult(34.0);
        spray(pr, 1 + mult(rng_), 0.12, {0.6, 0.12, 0.27, 0.005, 0.005}, pt);
        break;
      }
      case ProngKind::kBottom: {
        std::poisson_distribution<int> mult(15.0);
        double rest = pt;
        if (u(rng_) < 0.6) {  // semileptonic decay inside the prong
          const double lep = pt * (0.1 + 0.15 * u(rng_));
          std::normal_distribution<double> g(0.0, 0.03);
          add(lep, pr.dy + g(rng_), pr.dphi + g(rng_),
              u(rng_) < 0.5 ? ParticleType::kElectron : ParticleType::kMuon);
          rest -= lep;
        }
        spray(pr, 1 + mult(rng_), 0.06, {0.55, 0.12, 0.25, 0.04, 0.04}, rest);
        break;
      }
      case ProngKind::kTauHadronic: {
        const std::size_t charged = u(rng_) < 0.7 ? 1 : 3;
        std::poisson_distribution<int> photons(1.2);
        const std::size_t np = static_cast<std::size_t>(photons(rng_));
        std::normal_distribution<double> g(0.0, 0.02);
        std::uniform_real_distribution<double> wdist(0.3, 1.0);
        std::vector<double> w(charged + np);
        double total = 0.0;
        for (auto& v : w) total += (v = wdist(rng_));
        for (std::size_t i = 0; i < w.size(); ++i)
          add(pt * w[i] / total, pr.dy + g(rng_), pr.dphi + g(rng_),
              i < charged ? ParticleType::kChargedHadron : ParticleType::kPhoton);
        break;
      }
      case ProngKind::kElectron:
      case ProngKind::kMuon: {
        const bool fsr = u(rng_) < 0.3;
        const double frac = fsr ? 0.85 + 0.1 * u(rng_) : 1.0;
        add(pt * frac, pr.dy, pr.dphi,
            pr.kind == ProngKind::kElectron ? ParticleType::kElectron : ParticleType::kMuon);
        if (fsr) {
          std::normal_distribution<double> g(0.0, 0.02);
          add(pt * (1.0 - frac), pr.dy + g(rng_), pr.dphi + g(rng_), ParticleType::kPhoton);
        }
        break;
      }
    }
  }

  // Soft underlying-event particles spread over the cone.
  void underlying_event(std::size_t n) {
    std::uniform_real_distribution<double> r(0.0, 0.75), a(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> soft(0.2, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double rr = r(rng_), aa = a(rng_);
      add(soft(rng_), rr * std::cos(aa), rr * std::sin(aa),
          i % 3 == 0 ? ParticleType::kPhoton : ParticleType::kChargedHadron);
    }
  }

  Jet finish(ClassLabel label) {
    if (jet_.particles.size() < kMinParticles) underlying_event(kMinParticles - jet_.particles.size());
    if (jet_.particles.size() > kMaxParticles) {
      std::stable_sort(jet_.particles.begin(), jet_.particles.end(),
                       [](const Particle& l, const Particle& r) {
                         return std::hypot(l.p.px, l.p.py) > std::hypot(r.p.px, r.p.py);
                       });
      jet_.particles.resize(kMaxParticles);
    }
    std::shuffle(jet_.particles.begin(), jet_.particles.end(), rng_);
    jet_.label = label;
    return std::move(jet_);
  }

 private:
  std::mt19937_64& rng_;
  double jet_pt_, y0_, phi0_;
  Jet jet_;
};

// Two prongs balanced around the axis so that their pair mass is ~`mass`.
std::array<Prong, 2> two_prongs(std::mt19937_64& rng, double jet_pt, double mass, ProngKind a,
                                ProngKind b) {
  std::uniform_real_distribution<double> zdist(0.25, 0.75), ang(-std::numbers::pi, std::numbers::pi);
  const double z = zdist(rng);
  const double dr = std::min(0.7, mass / (jet_pt * std::sqrt(z * (1.0 - z))));
  const double th = ang(rng);
  const double c = std::cos(th), s = std::sin(th);
  return {Prong{a, z, (1.0 - z) * dr * c, (1.0 - z) * dr * s},
          Prong{b, 1.0 - z, -z * dr * c, -z * dr * s}};
}

}  // namespace

Jet generate_toy_jet(ClassLabel label, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ptd(450.0, 550.0), yd(-1.5, 1.5),
      phid(-std::numbers::pi, std::numbers::pi), u(0.0, 1.0);
  std::normal_distribution<double> massd(0.0, 1.0);
  const double jet_pt = ptd(rng);
  Builder b(rng, jet_pt, yd(rng), phid(rng));
  std::poisson_distribution<int> ue(2.0);

  auto two = [&](double mass, ProngKind x, ProngKind y) {
    for (const auto& p : two_prongs(rng, jet_pt, mass, x, y)) b.prong(p);
  };
  switch (label) {
    case ClassLabel::kQCD: {
      b.prong({ProngKind::kGluonLike, 1.0, 0.0, 0.0});
      break;
    }
    case ClassLabel::kQQ:
      two(90.0 + 3.0 * massd(rng), ProngKind::kLight, ProngKind::kLight);
      break;
    case ClassLabel::kBB:
      two(125.0 + 3.0 * massd(rng), ProngKind::kBottom, ProngKind::kBottom);
      break;
    case ClassLabel::kTauhTaue:
      two(125.0 + 3.0 * massd(rng), ProngKind::kTauHadronic, ProngKind::kElectron);
      break;
    case ClassLabel::kTauhTaumu:
      two(125.0 + 3.0 * massd(rng), ProngKind::kTauHadronic, ProngKind::kMuon);
      break;
    case ClassLabel::kTauhTauh:
      two(125.0 + 3.0 * massd(rng), ProngKind::kTauHadronic, ProngKind::kTauHadronic);
      break;
    case ClassLabel::kQqbBcs: {
      const double mass = 172.5 + 4.0 * massd(rng);
      const double r = mass / jet_pt;
      const double th = phid(rng);
      for (int k = 0; k < 3; ++k) {
        const double a = th + k * 2.0 * std::numbers::pi / 3.0 + 0.2 * massd(rng);
        b.prong({k == 0 && u(rng) < 0.5 ? ProngKind::kBottom : ProngKind::kLight, 1.0 / 3.0,
                 r * std::cos(a), r * std::sin(a)});
      }
      break;
    }
  }
  b.underlying_event(static_cast<std::size_t>(ue(rng)));
  return b.finish(label);
}

}  // namespace jetbench
