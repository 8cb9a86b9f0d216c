// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle for tape gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "jetbench/autodiff.hpp"

namespace jetbench::testing {

inline constexpr double kFdStep = 1e-5;
// Gradients below this magnitude are compared in absolute terms.
inline constexpr double kFdFloor = 1e-3;

using LossFn = std::function<ad::Var(ad::Tape&)>;

inline ad::Var random_leaf(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                           double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return ad::tensor(std::move(shape), std::move(v), true);
}

// Fixed random weights turning any tensor into a scalar with a generic gradient.
inline std::vector<double> probe_weights(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = d(g);
  return w;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
}

// Largest relative error between backprop and central differences over the
// given coordinates of `leaf` (all of them when `coords` is empty).
inline double fd_max_error(const LossFn& loss, const ad::Var& leaf,
                           std::vector<std::size_t> coords = {}) {
  if (coords.empty())
    for (std::size_t i = 0; i < leaf->size(); ++i) coords.push_back(i);
  leaf->zero_grad();
  {
    ad::Tape t;
    t.backward(loss(t));
  }
  const std::vector<double> analytic =
      leaf->has_grad() ? leaf->grad : std::vector<double>(leaf->size(), 0.0);
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double keep = leaf->value[i];
    ad::Tape tp, tm;
    tp.set_enabled(false);
    tm.set_enabled(false);
    leaf->value[i] = keep + kFdStep;
    const double fp = loss(tp)->item();
    leaf->value[i] = keep - kFdStep;
    const double fm = loss(tm)->item();
    leaf->value[i] = keep;
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * kFdStep)));
  }
  return worst;
}

inline double fd_max_error(const LossFn& loss, std::initializer_list<ad::Var> leaves) {
  double worst = 0.0;
  for (const auto& l : leaves) worst = std::max(worst, fd_max_error(loss, l));
  return worst;
}

}  // namespace jetbench::testing
