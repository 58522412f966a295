#pragma once

// Dense kernels behind the autodiff ops. Every kernel has a serial
// reference in mga::kernels::serial and an OpenMP version in mga::kernels.
// The parallel versions split work over output rows only, so each output
// element is accumulated in the same order as the serial reference and the
// two agree bit for bit.

#include <cstddef>

namespace mga::kernels {

namespace serial {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate);
// C[m x n] (+)= A^T * B with A stored [k x m], B stored [k x n]
void gemm_at_b(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
// C[m x n] (+)= A * B^T with A stored [m x k], B stored [n x k]
void gemm_a_bt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols);

}  // namespace serial

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate);
void gemm_at_b(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
void gemm_a_bt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols);

/// Work (m*k*n multiply-adds) below which the parallel kernels stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

int max_threads();

}  // namespace mga::kernels
