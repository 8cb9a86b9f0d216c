// SPDX-License-Identifier: Apache-2.0
//
// Jet augmentations. Kinematic transforms (rotate, translate) are exact
// Lorentz symmetries, so every pairwise feature is preserved. Collinear splits
// and soft emissions probe infrared/collinear safety; noise, smearing and
// particle dropout are the perturbation family used for supervised contrastive
// training.

#pragma once

#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "jetbench/jetdata.hpp"

namespace jetbench {

// Azimuthal rotation about the beam axis.
Jet rotate(const Jet& jet, double angle);

// Rigid shift in (rapidity, phi): a longitudinal boost plus an azimuthal turn.
// |d_rapidity| <= 1 and |d_phi| <= pi.
Jet translate(const Jet& jet, double d_rapidity, double d_phi);

// Splits particle `index` into f*p and (1-f)*p. At `nmax` the jet is returned
// unchanged.
Jet collinear_split(const Jet& jet, std::size_t index, double fraction, std::size_t nmax,
                    double min_pt = 1.0);

// Adds up to `n_soft` massless particles with pT ~ U(0, pt_scale] inside
// dR < 0.8 of the jet axis. pt_scale may not exceed 1e-3 of the jet pT.
Jet soft_add(const Jet& jet, std::size_t n_soft, double pt_scale, std::size_t nmax,
             std::mt19937_64& rng);

// pT scaled by (1 + N(0, sigma_pt_rel)), rapidity and phi jittered by
// N(0, sigma_angle); particle masses kept. Sanitized against the input.
Jet smear(const Jet& jet, double sigma_pt_rel, double sigma_angle, std::mt19937_64& rng);

// 3-momentum components scaled by (1 + N(0, sigma_rel)), energy recomputed
// from the particle mass. Sanitized against the input.
Jet noise(const Jet& jet, double sigma_rel, std::mt19937_64& rng);

// Removes each particle with probability `rate`, always keeping at least one.
Jet particle_dropout(const Jet& jet, double rate, std::mt19937_64& rng);

// ---- pipelines ---------------------------------------------------------------

struct RotateStep {
  double prob = 1.0;
};
struct TranslateStep {
  double prob = 1.0;
  double max_rapidity = 0.1;
  double max_phi = 0.1;
};
struct CollinearSplitStep {
  double prob = 0.3;
  std::size_t max_splits = 3;
  double min_pt = 1.0;
};
struct SoftAddStep {
  double prob = 0.3;
  std::size_t max_particles = 5;
  double pt_scale_rel = 1e-4;  // fraction of the jet pT
};
struct NoiseStep {
  double prob = 1.0;
  double sigma_rel = 0.02;
};
struct SmearStep {
  double prob = 1.0;
  double sigma_pt_rel = 0.05;
  double sigma_angle = 0.01;
};
struct DropoutStep {
  double prob = 1.0;
  double rate = 0.05;
};

using AugmentStep = std::variant<RotateStep, TranslateStep, CollinearSplitStep, SoftAddStep,
                                 NoiseStep, SmearStep, DropoutStep>;

enum class AugmentMode { kIdentity, kJetClr, kSupconTrain, kSupconVal };

struct AugmentationPipeline {
  AugmentMode mode = AugmentMode::kIdentity;
  std::vector<AugmentStep> steps;
  std::size_t nmax = 128;

  static AugmentationPipeline identity(std::size_t nmax = 128);
  static AugmentationPipeline jetclr(std::size_t nmax = 128);
  static AugmentationPipeline supcon_train(std::size_t nmax = 128);
  static AugmentationPipeline supcon_val(std::size_t nmax = 128);

  // supcon_val may contain only noise and smearing; magnitudes must respect caps.
  void validate() const;
  Jet apply(const Jet& jet, std::mt19937_64& rng) const;
};

// Two independently augmented views sharing the label of `jet`.
std::pair<Jet, Jet> two_views(const Jet& jet, const AugmentationPipeline& pipeline,
                              std::mt19937_64& rng);

}  // namespace jetbench
