#include "mga/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mga::kernels {

namespace {

// Row-range bodies shared by the serial and parallel entry points.
inline void gemm_rows(const double* a, const double* b, double* c, std::size_t r0,
                      std::size_t r1, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = r0; i < r1; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

inline void gemm_at_b_rows(const double* a, const double* b, double* c, std::size_t r0,
                           std::size_t r1, std::size_t m, std::size_t k, std::size_t n,
                           bool accumulate) {
  for (std::size_t i = r0; i < r1; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

inline void gemm_a_bt_rows(const double* a, const double* b, double* c, std::size_t r0,
                           std::size_t r1, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = r0; i < r1; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + s : s;
    }
  }
}

inline void softmax_row_range(const double* in, double* out, std::size_t r0, std::size_t r1,
                              std::size_t cols) {
  for (std::size_t r = r0; r < r1; ++r) {
    const double* x = in + r * cols;
    double* y = out + r * cols;
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
}

bool go_parallel(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

namespace serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  gemm_rows(a, b, c, 0, m, k, n, accumulate);
}

void gemm_at_b(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  gemm_at_b_rows(a, b, c, 0, m, m, k, n, accumulate);
}

void gemm_a_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  gemm_a_bt_rows(a, b, c, 0, m, k, n, accumulate);
}

void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols) {
  if (cols == 0) return;
  softmax_row_range(in, out, 0, rows, cols);
}

}  // namespace serial

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  if (!go_parallel(m * k * n)) return serial::gemm(a, b, c, m, k, n, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, k, n,
              accumulate);
  }
}

void gemm_at_b(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (!go_parallel(m * k * n)) return serial::gemm_at_b(a, b, c, m, k, n, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_at_b_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, m,
                   k, n, accumulate);
  }
}

void gemm_a_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (!go_parallel(m * k * n)) return serial::gemm_a_bt(a, b, c, m, k, n, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_a_bt_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, k,
                   n, accumulate);
  }
}

void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols) {
  if (cols == 0) return;
  if (!go_parallel(rows * cols * 16)) return serial::softmax_rows(in, out, rows, cols);
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    softmax_row_range(in, out, static_cast<std::size_t>(r), static_cast<std::size_t>(r) + 1,
                      cols);
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace mga::kernels
