// SPDX-License-Identifier: Apache-2.0

#include "jetbench/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <omp.h>

namespace jetbench::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

// One output row: c_row (+)= sum_kk a(kk) * b_row(kk), reduced in kk order.
inline void gemm_row(std::size_t k, std::size_t n, const double* a, std::size_t a_stride,
                     const double* b, double* c_row, bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, 0.0);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double av = a[kk * a_stride];
    if (av == 0.0) continue;
    const double* b_row = b + kk * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  batched_gemm_nn(1, m, k, n, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  batched_gemm_nt(1, m, k, n, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  batched_gemm_tn(1, m, k, n, a, b, c, accumulate);
}

void batched_gemm_nn(std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b, std::span<double> c,
                     bool accumulate) {
  const std::size_t rows = batch * m;
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static) if (rows * k * n > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t g = r / m;
    gemm_row(k, n, ap + r * k, 1, bp + g * k * n, cp + r * n, accumulate);
  }
}

void batched_gemm_nt(std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b, std::span<double> c,
                     bool accumulate) {
  std::vector<double> bt(batch * k * n);
  for (std::size_t g = 0; g < batch; ++g) transpose(n, k, b.data() + g * n * k, bt.data() + g * k * n);
  batched_gemm_nn(batch, m, k, n, a, bt, c, accumulate);
}

void batched_gemm_tn(std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b, std::span<double> c,
                     bool accumulate) {
  const std::size_t rows = batch * m;
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static) if (rows * k * n > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t g = r / m;
    const std::size_t i = r % m;
    gemm_row(k, n, ap + g * k * m + i, m, bp + g * k * n, cp + r * n, accumulate);
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  const double* xp = x.data();
  double* yp = y.data();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xp + r * cols;
    double* yr = yp + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void gelu(std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const double* xp = x.data();
  double* yp = y.data();
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (std::size_t i = 0; i < n; ++i)
    yp[i] = 0.5 * xp[i] * (1.0 + std::erf(xp[i] * std::numbers::sqrt2 * 0.5));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const double* xp = x.data();
  double* yp = y.data();
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) yp[i] += alpha * xp[i];
}

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(n); }

namespace reference {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[kk * m + i] * b[kk * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[r * cols + j] - mx);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = std::exp(x[r * cols + j] - mx) / sum;
  }
}

void gelu(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = x[i] * 0.5 * std::erfc(-x[i] / std::numbers::sqrt2);
}

}  // namespace reference
}  // namespace jetbench::kernels
