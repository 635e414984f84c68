// Times the OpenMP kernels against the serial reference on solver-shaped
// workloads and checks they agree exactly.

#include <chrono>
#include <cstdio>
#include <vector>

#include "cmlr/kernels.hpp"
#include "cmlr/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using cmlr::Matrix;

Matrix random_matrix(std::size_t rows, std::size_t cols, cmlr::Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

template <typename F>
double time_ms(F&& body, int reps) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) body();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp: %d threads\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif
  cmlr::Rng rng(42);

  std::printf("%-28s %10s %10s %8s %10s\n", "kernel", "serial ms", "omp ms", "speedup",
              "max diff");

  {
    // Encryption-chain shape: (n x p) times (p x p).
    const Matrix a = random_matrix(6000, 42, rng);
    const Matrix b = random_matrix(42, 42, rng);
    Matrix out_serial(6000, 42), out_omp(6000, 42);
    const double ts = time_ms([&] { cmlr::kernels::serial::multiply_into(a, b, out_serial); }, 5);
    const double tp = time_ms([&] { cmlr::kernels::multiply_into(a, b, out_omp); }, 5);
    std::printf("%-28s %10.3f %10.3f %8.2f %10.3e\n", "multiply 6000x42 * 42x42", ts, tp,
                ts / tp, cmlr::max_abs_diff(out_serial, out_omp));
  }
  {
    // Newton-iteration shape: X^T W X on the stacked design.
    const Matrix x = random_matrix(60000, 43, rng);
    std::vector<double> w(60000, 0.25);
    Matrix out_serial(43, 43), out_omp(43, 43);
    const double ts =
        time_ms([&] { cmlr::kernels::serial::weighted_gram_into(x, w, out_serial); }, 3);
    const double tp = time_ms([&] { cmlr::kernels::weighted_gram_into(x, w, out_omp); }, 3);
    std::printf("%-28s %10.3f %10.3f %8.2f %10.3e\n", "weighted gram 60000x43", ts, tp,
                ts / tp, cmlr::max_abs_diff(out_serial, out_omp));
  }
  {
    const Matrix x = random_matrix(60000, 43, rng);
    std::vector<double> v(43), out_serial(60000), out_omp(60000);
    for (double& e : v) e = rng.normal();
    const double ts =
        time_ms([&] { cmlr::kernels::serial::matvec_into(x, v, out_serial); }, 10);
    const double tp = time_ms([&] { cmlr::kernels::matvec_into(x, v, out_omp); }, 10);
    double diff = 0.0;
    for (std::size_t i = 0; i < out_serial.size(); ++i)
      diff = std::max(diff, std::abs(out_serial[i] - out_omp[i]));
    std::printf("%-28s %10.3f %10.3f %8.2f %10.3e\n", "matvec 60000x43", ts, tp, ts / tp,
                diff);
  }
  return 0;
}
