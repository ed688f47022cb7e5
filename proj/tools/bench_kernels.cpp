// Benchmark: serial reference kernels against the OpenMP variants, with a
// bitwise-equality check on every measured shape.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "sll/kernels.hpp"
#include "sll/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> random_matrix(int64_t rows, int64_t cols, sll::RngStream& rng) {
  std::vector<double> m(static_cast<size_t>(rows * cols));
  for (auto& x : m) x = rng.normal();
  return m;
}

}  // namespace

int main() {
  sll::RngStream rng(42);
  std::printf("threads available: %d\n\n", sll::kernels::thread_count());
  std::printf("%-28s %12s %12s %8s %8s\n", "kernel", "serial ms", "parallel ms", "speedup",
              "bitwise");

  struct Case {
    const char* name;
    int64_t m, k, n;
    int reps;
  };
  const Case cases[] = {
      {"matmul 192x64 * 64x64", 192, 64, 64, 200},
      {"matmul 192x64 * 64x256", 192, 64, 256, 100},
      {"matmul 256x256 * 256x256", 256, 256, 256, 20},
      {"matmul 512x512 * 512x512", 512, 512, 512, 5},
  };

  for (const auto& c : cases) {
    const auto a = random_matrix(c.m, c.k, rng);
    const auto b = random_matrix(c.k, c.n, rng);
    std::vector<double> out_serial(static_cast<size_t>(c.m * c.n));
    std::vector<double> out_parallel(out_serial.size());

    const double ts = time_ms(
        [&] { sll::kernels::matmul_nn_serial(a.data(), b.data(), out_serial.data(), c.m, c.k, c.n, false); },
        c.reps);
    const double tp = time_ms(
        [&] { sll::kernels::matmul_nn_parallel(a.data(), b.data(), out_parallel.data(), c.m, c.k, c.n, false); },
        c.reps);
    const bool same =
        std::memcmp(out_serial.data(), out_parallel.data(), out_serial.size() * sizeof(double)) == 0;
    std::printf("%-28s %12.3f %12.3f %7.2fx %8s\n", c.name, ts, tp, ts / tp,
                same ? "yes" : "NO");
    if (!same) return 1;
  }
  return 0;
}
