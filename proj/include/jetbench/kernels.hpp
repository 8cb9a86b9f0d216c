// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 kernels behind the autodiff ops. Every parallel kernel has a
// serial counterpart in `kernels::reference` that is kept only for tests and
// the benchmark. Parallel kernels split work over output rows and reduce in a
// fixed order, so results do not depend on the thread count.

#pragma once

#include <cstddef>
#include <span>

namespace jetbench::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m x n] (+)= A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// Batched variants: `batch` independent products laid out back to back.
void batched_gemm_nn(std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b, std::span<double> c,
                     bool accumulate);
void batched_gemm_nt(std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b, std::span<double> c,
                     bool accumulate);
void batched_gemm_tn(std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b, std::span<double> c,
                     bool accumulate);

// Row-wise softmax over contiguous rows of length `cols`.
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);

// y = x * Phi(x), exact erf form.
void gelu(std::span<const double> x, std::span<double> y);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace reference {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);
void gelu(std::span<const double> x, std::span<double> y);

}  // namespace reference

// Number of OpenMP threads the kernels will use.
int max_threads();
void set_threads(int n);

}  // namespace jetbench::kernels
