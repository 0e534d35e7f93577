// Times the serial reference kernels against the OpenMP variants and checks
// that both produce bit-identical output.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "balm/kernels.hpp"
#include "balm/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  const auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count() / reps;
}

std::vector<float> random_matrix(int rows, int cols, balm::Rng& rng) {
  std::vector<float> m(static_cast<size_t>(rows) * cols);
  for (auto& v : m) v = rng.uniform(-1.0f, 1.0f);
  return m;
}

}  // namespace

int main() {
  std::printf("OpenMP: %s, max threads: %d\n",
              balm::kernels::openmp_enabled() ? "enabled" : "disabled",
              balm::kernels::max_threads());
  std::printf("%-24s %12s %12s %9s %9s\n", "kernel", "serial ms", "parallel ms", "speedup",
              "equal");

  balm::Rng rng(1234);
  bool all_equal = true;
  for (int size : {64, 128, 256, 512}) {
    const int m = size, n = size, p = size;
    auto a = random_matrix(m, n, rng);
    auto b = random_matrix(n, p, rng);
    std::vector<float> c_serial(static_cast<size_t>(m) * p);
    std::vector<float> c_parallel(static_cast<size_t>(m) * p);
    const int reps = size <= 128 ? 20 : 5;

    const double serial_ms =
        time_ms([&] { balm::kernels::matmul_serial(a.data(), b.data(), c_serial.data(), m, n, p); },
                reps);
    const double parallel_ms =
        time_ms([&] { balm::kernels::matmul(a.data(), b.data(), c_parallel.data(), m, n, p); },
                reps);
    const bool equal = c_serial == c_parallel;
    all_equal = all_equal && equal;
    char name[64];
    std::snprintf(name, sizeof(name), "matmul %dx%dx%d", m, n, p);
    std::printf("%-24s %12.3f %12.3f %8.2fx %9s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, equal ? "yes" : "NO");

    std::vector<float> d_serial(static_cast<size_t>(m) * p);
    std::vector<float> d_parallel(static_cast<size_t>(m) * p);
    auto bt = random_matrix(p, n, rng);
    const double nt_serial_ms = time_ms(
        [&] { balm::kernels::matmul_nt_serial(a.data(), bt.data(), d_serial.data(), m, n, p); },
        reps);
    const double nt_parallel_ms = time_ms(
        [&] { balm::kernels::matmul_nt(a.data(), bt.data(), d_parallel.data(), m, n, p); }, reps);
    const bool nt_equal = d_serial == d_parallel;
    all_equal = all_equal && nt_equal;
    std::snprintf(name, sizeof(name), "matmul_nt %dx%dx%d", m, n, p);
    std::printf("%-24s %12.3f %12.3f %8.2fx %9s\n", name, nt_serial_ms, nt_parallel_ms,
                nt_serial_ms / nt_parallel_ms, nt_equal ? "yes" : "NO");
  }
  if (!all_equal) {
    std::printf("FAIL: parallel output differs from serial reference\n");
    return 1;
  }
  return 0;
}
