#include "titlegen/tensor/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#include "titlegen/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace titlegen::tensor::kernels {

namespace {

std::atomic<ExecMode> g_mode{
#ifdef _OPENMP
    ExecMode::kParallel
#else
    ExecMode::kSerial
#endif
};

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelFlopCutoff = 64 * 1024;
constexpr std::size_t kParallelElemCutoff = 32 * 1024;

bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  return g_mode.load(std::memory_order_relaxed) == ExecMode::kParallel &&
         omp_get_max_threads() > 1 && work >= kParallelFlopCutoff;
#else
  (void)work;
  return false;
#endif
}

// c[i, 0..r) over k ascending; one writer per output row.
inline void matmul_nn_row(const double* a, const double* b, double* c,
                          std::size_t i, std::size_t q, std::size_t r,
                          bool accumulate) {
  double* ci = c + i * r;
  if (!accumulate) std::memset(ci, 0, r * sizeof(double));
  const double* ai = a + i * q;
  for (std::size_t k = 0; k < q; ++k) {
    const double aik = ai[k];
    const double* bk = b + k * r;
    for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
  }
}

// c[k, 0..r) accumulating over i ascending; a stored p x q, accessed a[i, k].
inline void matmul_tn_row(const double* a, const double* b, double* c,
                          std::size_t k, std::size_t p, std::size_t q,
                          std::size_t r, bool accumulate) {
  double* ck = c + k * r;
  if (!accumulate) std::memset(ck, 0, r * sizeof(double));
  for (std::size_t i = 0; i < p; ++i) {
    const double aik = a[i * q + k];
    const double* bi = b + i * r;
    for (std::size_t j = 0; j < r; ++j) ck[j] += aik * bi[j];
  }
}

// c[i, j] = dot(a row i, b row j) over k ascending; b stored r x q.
inline void matmul_nt_row(const double* a, const double* b, double* c,
                          std::size_t i, std::size_t q, std::size_t r,
                          bool accumulate) {
  const double* ai = a + i * q;
  double* ci = c + i * r;
  for (std::size_t j = 0; j < r; ++j) {
    const double* bj = b + j * q;
    double s = 0.0;
    for (std::size_t k = 0; k < q; ++k) s += ai[k] * bj[k];
    ci[j] = accumulate ? ci[j] + s : s;
  }
}

inline void softmax_row(const double* x, double* y, std::size_t n) {
  const double* row = x;
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(row[j] - mx);
    z += y[j];
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

}  // namespace

ExecMode exec_mode() { return g_mode.load(std::memory_order_relaxed); }

void set_exec_mode(ExecMode mode) {
  g_mode.store(mode, std::memory_order_relaxed);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t p,
            std::size_t q, std::size_t r, bool trans_a, bool trans_b,
            bool accumulate) {
  if (trans_a && trans_b)
    throw ContractError("matmul: trans_a && trans_b unsupported");
  if (trans_a) {
    // a stored q x p (p logical rows of a^T), i.e. op(a)[p x q] = a^T.
    // Reuse the TN row kernel: output row index runs over p.
    for (std::size_t k = 0; k < p; ++k) matmul_tn_row(a, b, c, k, q, p, r, accumulate);
  } else if (trans_b) {
    for (std::size_t i = 0; i < p; ++i) matmul_nt_row(a, b, c, i, q, r, accumulate);
  } else {
    for (std::size_t i = 0; i < p; ++i) matmul_nn_row(a, b, c, i, q, r, accumulate);
  }
}

void tanh_vec(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void sigmoid_vec(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) softmax_row(x + i * n, y + i * n, n);
}

}  // namespace serial

namespace par {

void matmul(const double* a, const double* b, double* c, std::size_t p,
            std::size_t q, std::size_t r, bool trans_a, bool trans_b,
            bool accumulate) {
  if (trans_a && trans_b)
    throw ContractError("matmul: trans_a && trans_b unsupported");
#ifdef _OPENMP
  if (trans_a) {
    const auto rows = static_cast<std::ptrdiff_t>(p);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < rows; ++k)
      matmul_tn_row(a, b, c, static_cast<std::size_t>(k), q, p, r, accumulate);
  } else if (trans_b) {
    const auto rows = static_cast<std::ptrdiff_t>(p);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i)
      matmul_nt_row(a, b, c, static_cast<std::size_t>(i), q, r, accumulate);
  } else {
    const auto rows = static_cast<std::ptrdiff_t>(p);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i)
      matmul_nn_row(a, b, c, static_cast<std::size_t>(i), q, r, accumulate);
  }
#else
  serial::matmul(a, b, c, p, q, r, trans_a, trans_b, accumulate);
#endif
}

void tanh_vec(const double* x, double* y, std::size_t n) {
#ifdef _OPENMP
  const auto len = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < len; ++i) y[i] = std::tanh(x[i]);
#else
  serial::tanh_vec(x, y, n);
#endif
}

void sigmoid_vec(const double* x, double* y, std::size_t n) {
#ifdef _OPENMP
  const auto len = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < len; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
#else
  serial::sigmoid_vec(x, y, n);
#endif
}

void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n) {
#ifdef _OPENMP
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    softmax_row(x + static_cast<std::size_t>(i) * n,
                y + static_cast<std::size_t>(i) * n, n);
#else
  serial::softmax_rows(x, y, m, n);
#endif
}

}  // namespace par

void matmul(const double* a, const double* b, double* c, std::size_t p,
            std::size_t q, std::size_t r, bool trans_a, bool trans_b,
            bool accumulate) {
  if (use_parallel(p * q * r)) {
    par::matmul(a, b, c, p, q, r, trans_a, trans_b, accumulate);
  } else {
    serial::matmul(a, b, c, p, q, r, trans_a, trans_b, accumulate);
  }
}

void tanh_vec(const double* x, double* y, std::size_t n) {
  if (n >= kParallelElemCutoff && use_parallel(n * 8)) {
    par::tanh_vec(x, y, n);
  } else {
    serial::tanh_vec(x, y, n);
  }
}

void sigmoid_vec(const double* x, double* y, std::size_t n) {
  if (n >= kParallelElemCutoff && use_parallel(n * 8)) {
    par::sigmoid_vec(x, y, n);
  } else {
    serial::sigmoid_vec(x, y, n);
  }
}

void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n) {
  if (use_parallel(m * n * 4)) {
    par::softmax_rows(x, y, m, n);
  } else {
    serial::softmax_rows(x, y, m, n);
  }
}

}  // namespace titlegen::tensor::kernels
