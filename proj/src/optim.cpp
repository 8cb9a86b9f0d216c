// SPDX-License-Identifier: Apache-2.0

#include "jetbench/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "jetbench/kernels.hpp"

namespace jetbench {
namespace {

void check_buffers(const NamedParams& params, const std::vector<TensorRecord>& buffers,
                   std::size_t offset, const std::string& prefix) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& rec = buffers.at(offset + i);
    if (rec.name != prefix + params[i].first || rec.shape != params[i].second->shape)
      throw std::invalid_argument("optimizer state: buffer " + rec.name + " does not match " +
                                  prefix + params[i].first);
  }
}

}  // namespace

double global_grad_norm(std::span<const ad::Var> params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p->grad) sq += g * g;
  return std::sqrt(sq);
}

double clip_gradients(std::span<const ad::Var> params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double s = max_norm / norm;
  for (const auto& p : params)
    for (double& g : p->grad) g *= s;
  return s;
}

std::vector<double> newton_schulz5(std::span<const double> g, std::size_t rows,
                                   std::size_t cols, int iterations, int polish) {
  if (g.size() != rows * cols || rows == 0 || cols == 0)
    throw std::invalid_argument("newton_schulz5: matrix size mismatch");
  const bool tall = rows > cols;
  const std::size_t m = tall ? cols : rows, n = tall ? rows : cols;
  std::vector<double> x(m * n);
  double fro = 0.0;
  for (double v : g) fro += v * v;
  fro = std::sqrt(fro) + 1e-7;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = g[i * cols + j] / fro;
      if (tall)
        x[j * n + i] = v;
      else
        x[i * n + j] = v;
    }
  std::vector<double> a(m * m), b(m * m), bx(m * n);
  auto step = [&](double ca, double cb, double cc) {
    kernels::gemm_nt(m, n, m, x, x, a, false);  // A = X X^T
    kernels::gemm_nn(m, m, m, a, a, b, false);  // B = A A
    for (std::size_t i = 0; i < m * m; ++i) b[i] = cb * a[i] + cc * b[i];
    kernels::gemm_nn(m, m, n, b, x, bx, false);
    for (std::size_t i = 0; i < m * n; ++i) x[i] = ca * x[i] + bx[i];
  };
  for (int it = 0; it < iterations; ++it) step(kNsA, kNsB, kNsC);
  for (int it = 0; it < polish; ++it) step(kPolishA, kPolishB, kPolishC);
  if (!tall) return x;
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[j * n + i];
  return out;
}

AdamW::AdamW(NamedParams params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr >= 0.0) || !(config_.eps > 0.0) || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.weight_decay >= 0.0))
    throw std::invalid_argument("adamw: invalid hyperparameters");
  for (const auto& [_, p] : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void AdamW::step() { update(++steps_); }

void AdamW::update(std::uint64_t t) {
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k].second;
    if (p.grad.empty()) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      p.value[i] -= c.lr * c.weight_decay * p.value[i];
      p.value[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

std::vector<TensorRecord> AdamW::state() const {
  std::vector<TensorRecord> out;
  for (std::size_t k = 0; k < params_.size(); ++k)
    out.push_back({"adamw.m." + params_[k].first, params_[k].second->shape, m_[k]});
  for (std::size_t k = 0; k < params_.size(); ++k)
    out.push_back({"adamw.v." + params_[k].first, params_[k].second->shape, v_[k]});
  return out;
}

void AdamW::load_state(std::uint64_t steps, const std::vector<TensorRecord>& buffers) {
  if (buffers.size() != 2 * params_.size())
    throw std::invalid_argument("adamw state: expected " + std::to_string(2 * params_.size()) +
                                " buffers");
  check_buffers(params_, buffers, 0, "adamw.m.");
  check_buffers(params_, buffers, params_.size(), "adamw.v.");
  for (std::size_t k = 0; k < params_.size(); ++k) {
    m_[k] = buffers[k].data;
    v_[k] = buffers[params_.size() + k].data;
  }
  steps_ = steps;
}

Muon::Muon(NamedParams matrices, NamedParams others, MuonConfig config)
    : matrices_(std::move(matrices)), config_(config), fallback_(std::move(others), config.fallback) {
  for (const auto& [name, p] : matrices_) {
    if (p->shape.size() != 2)
      throw std::invalid_argument("muon: parameter " + name + " with shape " +
                                  ad::shape_str(p->shape) + " is not a matrix");
    momentum_.emplace_back(p->size(), 0.0);
  }
  if (config_.ns_iterations < 1) throw std::invalid_argument("muon: ns_iterations must be >= 1");
  if (config_.polish_iterations < 0) throw std::invalid_argument("muon: polish_iterations must be >= 0");
}

void Muon::step() {
  ++steps_;
  for (std::size_t k = 0; k < matrices_.size(); ++k) {
    auto& p = *matrices_[k].second;
    if (p.grad.empty()) continue;
    auto& b = momentum_[k];
    bool nonzero = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      b[i] = config_.momentum * b[i] + p.grad[i];
      nonzero = nonzero || b[i] != 0.0;
    }
    if (!nonzero) continue;
    const std::size_t rows = p.dim(0), cols = p.dim(1);
    const auto dir = newton_schulz5(b, rows, cols, config_.ns_iterations, config_.polish_iterations);
    const double s = config_.lr * std::sqrt(static_cast<double>(std::max(rows, cols)));
    for (std::size_t i = 0; i < p.size(); ++i) p.value[i] -= s * dir[i];
  }
  fallback_.update(steps_);
}

std::vector<TensorRecord> Muon::state() const {
  std::vector<TensorRecord> out;
  for (std::size_t k = 0; k < matrices_.size(); ++k)
    out.push_back({"muon.b." + matrices_[k].first, matrices_[k].second->shape, momentum_[k]});
  for (auto& r : fallback_.state()) out.push_back(std::move(r));
  return out;
}

void Muon::load_state(std::uint64_t steps, const std::vector<TensorRecord>& buffers) {
  if (buffers.size() < matrices_.size())
    throw std::invalid_argument("muon state: too few buffers");
  check_buffers(matrices_, buffers, 0, "muon.b.");
  for (std::size_t k = 0; k < matrices_.size(); ++k) momentum_[k] = buffers[k].data;
  fallback_.load_state(steps, {buffers.begin() + static_cast<std::ptrdiff_t>(matrices_.size()),
                               buffers.end()});
  steps_ = steps;
}

std::size_t select_checkpoint(std::span<const ValidationPoint> history, Phase phase) {
  if (history.empty()) throw std::invalid_argument("select_checkpoint: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const bool better = phase == Phase::kPretrain ? history[i].loss < history[best].loss
                                                  : history[i].macro_auc > history[best].macro_auc;
    if (better) best = i;
  }
  return history[best].epoch;
}

}  // namespace jetbench
