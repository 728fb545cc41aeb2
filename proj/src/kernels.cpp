#include "artic/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace artic::kernels {

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int t = 0; t < k; ++t) {
        sum += ai[t] * b[static_cast<size_t>(t) * n + j];
      }
      ci[j] = sum;
    }
  }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int t = 0; t < k; ++t) {
        sum += ai[t] * b[static_cast<size_t>(t) * n + j];
      }
      ci[j] = sum;
    }
  }
}

void matmul_grad_a_serial(const double* dc, const double* b, double* da, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* dci = dc + static_cast<size_t>(i) * n;
    double* dai = da + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* bj = b + static_cast<size_t>(j) * n;
      double sum = 0.0;
      for (int t = 0; t < n; ++t) {
        sum += dci[t] * bj[t];
      }
      dai[j] += sum;
    }
  }
}

void matmul_grad_a(const double* dc, const double* b, double* da, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* dci = dc + static_cast<size_t>(i) * n;
    double* dai = da + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* bj = b + static_cast<size_t>(j) * n;
      double sum = 0.0;
      for (int t = 0; t < n; ++t) {
        sum += dci[t] * bj[t];
      }
      dai[j] += sum;
    }
  }
}

void matmul_grad_b_serial(const double* a, const double* dc, double* db, int m, int k, int n) {
  for (int i = 0; i < k; ++i) {
    double* dbi = db + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int t = 0; t < m; ++t) {
        sum += a[static_cast<size_t>(t) * k + i] * dc[static_cast<size_t>(t) * n + j];
      }
      dbi[j] += sum;
    }
  }
}

void matmul_grad_b(const double* a, const double* dc, double* db, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < k; ++i) {
    double* dbi = db + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int t = 0; t < m; ++t) {
        sum += a[static_cast<size_t>(t) * k + i] * dc[static_cast<size_t>(t) * n + j];
      }
      dbi[j] += sum;
    }
  }
}

static void softmax_row(const double* x, double* y, int cols) {
  double maxv = x[0];
  for (int j = 1; j < cols; ++j) maxv = std::max(maxv, x[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - maxv);
    sum += y[j];
  }
  double inv = 1.0 / sum;
  for (int j = 0; j < cols; ++j) y[j] *= inv;
}

void softmax_rows_serial(const double* x, double* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    softmax_row(x + static_cast<size_t>(i) * cols, y + static_cast<size_t>(i) * cols, cols);
  }
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    softmax_row(x + static_cast<size_t>(i) * cols, y + static_cast<size_t>(i) * cols, cols);
  }
}

}  // namespace artic::kernels
