#pragma once

#include <cstdint>
#include <functional>

namespace sll::kernels {

// Dense double-precision kernels behind the tensor ops. Each kernel exists
// twice: a plain serial reference and an OpenMP variant. Both compute every
// output element with the same fixed-order inner loop, so the parallel
// results are bitwise identical to the serial ones for any thread count
// (each output element is owned by exactly one thread).
//
// The active variant is a process-wide switch; tests pin it both ways and
// assert equality, the benchmark tool compares their throughput.

void set_parallel(bool on);
bool parallel_enabled();
int thread_count();

// C (m x n) = A (m x k) * B (k x n); accumulate adds into C.
void matmul_nn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_nn_parallel(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate = false);

// C (m x n) = A (m x k) * B^T where B is stored (n x k).
void matmul_nt_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_nt_parallel(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate = false);

// C (m x n) = A^T * B where A is stored (k x m).
void matmul_tn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_tn_parallel(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate = false);

// Runs fn(i) for i in [0, n). Parallel variant assigns disjoint index blocks
// to threads; fn must only write state owned by index i.
void for_rows(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace sll::kernels
