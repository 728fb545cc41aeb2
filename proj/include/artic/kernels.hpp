#pragma once

#include <cstddef>

namespace artic::kernels {

// Dense kernels behind the tape's hot operations. Each OpenMP kernel has a
// serial reference implementation kept for testing and benchmarking. The
// parallel versions assign every output element to exactly one thread and
// keep the inner accumulation order identical to the serial code, so their
// results are bitwise-equal to the reference.

// c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n);

// da[m x k] += dc[m x n] * b^T   (b is [k x n])
void matmul_grad_a(const double* dc, const double* b, double* da, int m, int k, int n);
void matmul_grad_a_serial(const double* dc, const double* b, double* da, int m, int k, int n);

// db[k x n] += a^T * dc          (a is [m x k])
void matmul_grad_b(const double* a, const double* dc, double* db, int m, int k, int n);
void matmul_grad_b_serial(const double* a, const double* dc, double* db, int m, int k, int n);

// row-wise max-subtracted softmax
void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_serial(const double* x, double* y, int rows, int cols);

}  // namespace artic::kernels
