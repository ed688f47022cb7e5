#include "sll/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sll::kernels {

namespace {
std::atomic<bool> g_parallel{true};

// Row blocks of C owned by one caller; the same loop body backs the serial
// and parallel variants so their results match bitwise.
inline void nn_rows(const double* a, const double* b, double* c, int64_t row_begin, int64_t row_end,
                    int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = row_begin; i < row_end; ++i) {
    double* ci = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    }
    const double* ai = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

inline void nt_rows(const double* a, const double* b, double* c, int64_t row_begin, int64_t row_end,
                    int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = row_begin; i < row_end; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      if (accumulate) ci[j] += acc; else ci[j] = acc;
    }
  }
}

// a stored (k x m): element a[kk, i] lives at a[kk * m + i].
inline void tn_rows(const double* a, const double* b, double* c, int64_t row_begin, int64_t row_end,
                    int64_t m, int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = row_begin; i < row_end; ++i) {
    double* ci = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    }
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = a[kk * m + i];
      const double* bk = b + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}
}  // namespace

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul_nn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  nn_rows(a, b, c, 0, m, k, n, accumulate);
}

void matmul_nn_parallel(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) nn_rows(a, b, c, i, i + 1, k, n, accumulate);
#else
  nn_rows(a, b, c, 0, m, k, n, accumulate);
#endif
}

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  if (parallel_enabled() && m >= 4) {
    matmul_nn_parallel(a, b, c, m, k, n, accumulate);
  } else {
    matmul_nn_serial(a, b, c, m, k, n, accumulate);
  }
}

void matmul_nt_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  nt_rows(a, b, c, 0, m, k, n, accumulate);
}

void matmul_nt_parallel(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) nt_rows(a, b, c, i, i + 1, k, n, accumulate);
#else
  nt_rows(a, b, c, 0, m, k, n, accumulate);
#endif
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  if (parallel_enabled() && m >= 4) {
    matmul_nt_parallel(a, b, c, m, k, n, accumulate);
  } else {
    matmul_nt_serial(a, b, c, m, k, n, accumulate);
  }
}

void matmul_tn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  tn_rows(a, b, c, 0, m, m, k, n, accumulate);
}

void matmul_tn_parallel(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) tn_rows(a, b, c, i, i + 1, m, k, n, accumulate);
#else
  tn_rows(a, b, c, 0, m, m, k, n, accumulate);
#endif
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  if (parallel_enabled() && m >= 4) {
    matmul_tn_parallel(a, b, c, m, k, n, accumulate);
  } else {
    matmul_tn_serial(a, b, c, m, k, n, accumulate);
  }
}

void for_rows(int64_t n, const std::function<void(int64_t)>& fn) {
#ifdef _OPENMP
  if (parallel_enabled() && n >= 8) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace sll::kernels
