// SPDX-License-Identifier: Apache-2.0
//
// Jet / particle records, kinematics, physics preprocessing and batching.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jetbench {

inline constexpr std::size_t kNumClasses = 7;
inline constexpr std::size_t kNumParticleTypes = 5;
inline constexpr std::size_t kNumContinuousFeatures = 5;
inline constexpr std::size_t kNumFeatures = kNumContinuousFeatures + kNumParticleTypes;
inline constexpr std::size_t kNumPairFeatures = 4;
inline constexpr double kTargetJetPt = 500.0;
inline constexpr double kLogFloor = 1e-8;

enum class ParticleType : std::uint8_t {
  kChargedHadron = 0,
  kNeutralHadron = 1,
  kPhoton = 2,
  kElectron = 3,
  kMuon = 4,
};

// Order matches the per-class columns of the reported tables.
enum class ClassLabel : std::uint8_t {
  kBB = 0,
  kTauhTaue = 1,
  kTauhTaumu = 2,
  kTauhTauh = 3,
  kQqbBcs = 4,
  kQQ = 5,
  kQCD = 6,
};

std::string_view class_name(ClassLabel c);
std::optional<ClassLabel> class_from_name(std::string_view name);
constexpr std::size_t index(ClassLabel c) { return static_cast<std::size_t>(c); }
constexpr ClassLabel class_at(std::size_t i) { return static_cast<ClassLabel>(i); }

class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FourMomentum {
  double px = 0.0, py = 0.0, pz = 0.0, energy = 0.0;

  FourMomentum& operator+=(const FourMomentum& o) {
    px += o.px;
    py += o.py;
    pz += o.pz;
    energy += o.energy;
    return *this;
  }
  friend bool operator==(const FourMomentum&, const FourMomentum&) = default;
};

struct Particle {
  FourMomentum p;
  ParticleType type = ParticleType::kChargedHadron;

  friend bool operator==(const Particle&, const Particle&) = default;
};

struct Jet {
  std::vector<Particle> particles;
  ClassLabel label = ClassLabel::kQCD;

  FourMomentum momentum() const;
  friend bool operator==(const Jet&, const Jet&) = default;
};

struct Kinematics {
  double pt = 0.0;
  double rapidity = 0.0;
  double phi = 0.0;
  double mass = 0.0;
  bool clamped = false;  // E <= |pz| required clamping to evaluate the rapidity
};

Kinematics kinematics(const FourMomentum& p);
inline Kinematics kinematics(const Particle& p) { return kinematics(p.p); }

// Builds a 4-vector from (pT, rapidity, phi, mass).
FourMomentum from_pt_y_phi_m(double pt, double rapidity, double phi, double mass);

// Wraps an angle difference to (-pi, pi].
double wrap_phi(double dphi);

double delta_r(const Kinematics& a, const Kinematics& b);

// Energy non-negative, finite, and not spacelike beyond a 1e-6 relative tolerance.
bool is_physical(const Particle& p);

// Rescales every 4-vector so the jet pT equals 500 GeV.
Jet normalize_jet(const Jet& jet);

struct SanitizeResult {
  Jet jet;
  std::size_t reverted = 0;
};

// Particles of `jet` that are non-finite or unphysical are replaced by their
// counterpart in `original`.
SanitizeResult sanitize(const Jet& jet, const Jet& original);

struct PairFeatures {
  double ln_delta_r = 0.0;
  double ln_kt = 0.0;
  double ln_z = 0.0;
  double ln_m2 = 0.0;

  friend bool operator==(const PairFeatures&, const PairFeatures&) = default;
};

PairFeatures pairwise_features(const Particle& a, const Particle& b);

// Padded batch. Particle rows are ordered by descending pT within a jet.
struct JetBatch {
  std::size_t batch = 0;
  std::size_t nmax = 0;
  std::vector<double> features;      // [batch, nmax, kNumFeatures]
  std::vector<double> mask;          // [batch, nmax], 1 = real particle
  std::vector<double> interactions;  // [batch, kNumPairFeatures, nmax, nmax]
  std::vector<int> labels;           // [batch]
  std::vector<std::size_t> counts;   // real particles per jet

  double feature(std::size_t b, std::size_t i, std::size_t f) const {
    return features[(b * nmax + i) * kNumFeatures + f];
  }
  double interaction(std::size_t b, std::size_t c, std::size_t i, std::size_t j) const {
    return interactions[((b * kNumPairFeatures + c) * nmax + i) * nmax + j];
  }
};

// Per-particle input features relative to the jet axis:
// (d_rapidity, d_phi, ln pT, ln E, dR, type one-hot x5).
std::array<double, kNumFeatures> particle_features(const Particle& p, const Kinematics& axis);

// Pads to `nmax`; jets longer than `nmax` keep their highest-pT particles.
JetBatch build_batch(std::span<const Jet> jets, std::size_t nmax);

// Longest jet in the span, capped at `nmax`. Padding a batch to this width is
// equivalent to padding it to `nmax`.
std::size_t batch_width(std::span<const Jet> jets, std::size_t nmax);

// ---- synthetic data --------------------------------------------------------

// Class-dependent toy jet: prong count, prong masses and type-flag mix vary by
// class. Particle count lies in [3, 100].
Jet generate_toy_jet(ClassLabel label, std::mt19937_64& rng);

}  // namespace jetbench
