// Benchmark of the parallel kernels against their serial references at the
// matrix shapes the training loop actually runs.

#include <chrono>
#include <cstdio>
#include <functional>

#include "aai/kernels.hpp"
#include "aai/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace aai;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_shape(const char* name, std::size_t b, std::size_t in, std::size_t out) {
  Rng rng(7);
  const Matrix a = random_matrix(b, in, rng);
  const Matrix w = random_matrix(in, out, rng);
  Matrix c;
  const int reps = 20;
  const double gflop = 2.0 * b * in * out * 1e-9;

  const double serial = time_ms([&] { matmul_serial(a, w, c); }, reps);
  const double parallel = time_ms([&] { matmul(a, w, c); }, reps);

  Matrix c_ref;
  matmul_serial(a, w, c_ref);
  matmul(a, w, c);
  const bool identical = c.data == c_ref.data;

  std::printf("%-24s %5zux%zux%-5zu serial %8.3f ms (%5.2f GF/s)  omp %8.3f ms (%5.2f GF/s)  "
              "speedup %4.2fx  bit-identical %s\n",
              name, b, in, out, serial, gflop / serial * 1e3, parallel,
              gflop / parallel * 1e3, serial / parallel, identical ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP\n");
#endif
  bench_shape("encoder layer 1", 256, 192, 160);
  bench_shape("encoder layer 2", 256, 160, 128);
  bench_shape("decoder output", 256, 160, 192);
  bench_shape("inference batch", 2048, 192, 160);
  bench_shape("latent", 256, 32, 16);

  // Transposed-product kernels used by backprop.
  {
    Rng rng(11);
    const Matrix x = random_matrix(256, 192, rng);
    const Matrix dy = random_matrix(256, 160, rng);
    Matrix dw;
    const double gflop = 2.0 * 256 * 192 * 160 * 1e-9;
    const double serial = time_ms([&] { matmul_tn_serial(x, dy, dw); }, 20);
    const double parallel = time_ms([&] { matmul_tn(x, dy, dw); }, 20);
    std::printf("%-24s %5ux%ux%-5u serial %8.3f ms (%5.2f GF/s)  omp %8.3f ms (%5.2f GF/s)  "
                "speedup %4.2fx\n",
                "grad weight (tn)", 256u, 192u, 160u, serial, gflop / serial * 1e3, parallel,
                gflop / parallel * 1e3, serial / parallel);
  }
  return 0;
}
