// Compares the OpenMP kernels against their serial reference implementations:
// wall time, speedup, and a bitwise-equality check on the outputs.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "artic/kernels.hpp"
#include "artic/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_best_of(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void fill_random(std::vector<double>& v, artic::Rng& rng) {
  for (double& x : v) x = rng.normal();
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
  const char* name;
  double serial_s;
  double parallel_s;
  bool exact;
};

void print_row(const Row& r) {
  std::printf("| %-16s | %10.4f | %10.4f | %7.2fx | %-7s |\n", r.name, r.serial_s * 1e3,
              r.parallel_s * 1e3, r.serial_s / r.parallel_s, r.exact ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  int m = 256, k = 256, n = 256, reps = 5;
  if (argc > 1) m = k = n = std::atoi(argv[1]);
  if (argc > 2) reps = std::atoi(argv[2]);

  artic::Rng rng(42);
  std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
  std::vector<double> dc(static_cast<size_t>(m) * n);
  fill_random(a, rng);
  fill_random(b, rng);
  fill_random(dc, rng);

  std::vector<double> out_s(static_cast<size_t>(m) * n), out_p(out_s.size());
  std::vector<double> da_s(a.size()), da_p(a.size()), db_s(b.size()), db_p(b.size());
  std::vector<double> sm_s(dc.size()), sm_p(dc.size());

#ifdef _OPENMP
  std::printf("threads: %d (set OMP_NUM_THREADS to vary)\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP)\n");
#endif
  std::printf("matrix sizes: %d x %d x %d, best of %d runs, times in ms\n\n", m, k, n, reps);
  std::printf("| %-16s | %10s | %10s | %8s | %-7s |\n", "kernel", "serial", "parallel",
              "speedup", "bitwise");
  std::printf("|------------------|------------|------------|----------|---------|\n");

  bool all_exact = true;
  {
    Row r{"matmul",
          time_best_of([&] { artic::kernels::matmul_serial(a.data(), b.data(), out_s.data(), m, k, n); }, reps),
          time_best_of([&] { artic::kernels::matmul(a.data(), b.data(), out_p.data(), m, k, n); }, reps),
          bitwise_equal(out_s, out_p)};
    all_exact = all_exact && r.exact;
    print_row(r);
  }
  {
    std::fill(da_s.begin(), da_s.end(), 0.0);
    std::fill(da_p.begin(), da_p.end(), 0.0);
    Row r{"matmul_grad_a",
          time_best_of([&] { artic::kernels::matmul_grad_a_serial(dc.data(), b.data(), da_s.data(), m, k, n); }, reps),
          time_best_of([&] { artic::kernels::matmul_grad_a(dc.data(), b.data(), da_p.data(), m, k, n); }, reps),
          false};
    // The grad kernels accumulate; rerun once from zero for the equality check.
    std::fill(da_s.begin(), da_s.end(), 0.0);
    std::fill(da_p.begin(), da_p.end(), 0.0);
    artic::kernels::matmul_grad_a_serial(dc.data(), b.data(), da_s.data(), m, k, n);
    artic::kernels::matmul_grad_a(dc.data(), b.data(), da_p.data(), m, k, n);
    r.exact = bitwise_equal(da_s, da_p);
    all_exact = all_exact && r.exact;
    print_row(r);
  }
  {
    Row r{"matmul_grad_b",
          time_best_of([&] { artic::kernels::matmul_grad_b_serial(a.data(), dc.data(), db_s.data(), m, k, n); }, reps),
          time_best_of([&] { artic::kernels::matmul_grad_b(a.data(), dc.data(), db_p.data(), m, k, n); }, reps),
          false};
    std::fill(db_s.begin(), db_s.end(), 0.0);
    std::fill(db_p.begin(), db_p.end(), 0.0);
    artic::kernels::matmul_grad_b_serial(a.data(), dc.data(), db_s.data(), m, k, n);
    artic::kernels::matmul_grad_b(a.data(), dc.data(), db_p.data(), m, k, n);
    r.exact = bitwise_equal(db_s, db_p);
    all_exact = all_exact && r.exact;
    print_row(r);
  }
  {
    Row r{"softmax_rows",
          time_best_of([&] { artic::kernels::softmax_rows_serial(dc.data(), sm_s.data(), m, n); }, reps),
          time_best_of([&] { artic::kernels::softmax_rows(dc.data(), sm_p.data(), m, n); }, reps),
          bitwise_equal(sm_s, sm_p)};
    all_exact = all_exact && r.exact;
    print_row(r);
  }

  std::printf("\n%s\n", all_exact ? "all kernels bitwise-equal to the serial reference"
                                  : "MISMATCH: a parallel kernel diverged from its reference");
  return all_exact ? 0 : 1;
}
