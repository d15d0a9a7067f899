// Compares the serial reference kernels against the OpenMP versions.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "dcbdl/kernels.hpp"
#include "dcbdl/rng.hpp"

using namespace dcbdl;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_per_call(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

void bench_case(const kern::ConvDims& d, int reps) {
  CounterRng rng(42);
  std::vector<float> in(static_cast<std::size_t>(d.batch * d.cin * d.h * d.w));
  std::vector<float> ker(static_cast<std::size_t>(d.cout * d.cin * d.kh * d.kw));
  std::vector<float> bias(static_cast<std::size_t>(d.cout));
  std::vector<float> out(static_cast<std::size_t>(d.batch * d.cout * d.h * d.w));
  std::vector<float> gin(in.size()), gker(ker.size()), gbias(bias.size());
  for (auto& v : in) v = static_cast<float>(rng.normal());
  for (auto& v : ker) v = static_cast<float>(rng.normal() * 0.1);

  const double macs = 2.0 * static_cast<double>(d.batch) * d.cout * d.h * d.w * d.cin * d.kh * d.kw;

  struct Row {
    const char* name;
    std::function<void()> serial, omp;
  } rows[] = {
      {"forward",
       [&] { kern::conv2d_forward_serial(in.data(), ker.data(), bias.data(), out.data(), d); },
       [&] { kern::conv2d_forward_omp(in.data(), ker.data(), bias.data(), out.data(), d); }},
      {"backward_input",
       [&] { kern::conv2d_backward_input_serial(out.data(), ker.data(), gin.data(), d); },
       [&] { kern::conv2d_backward_input_omp(out.data(), ker.data(), gin.data(), d); }},
      {"backward_kernel",
       [&] { kern::conv2d_backward_kernel_serial(out.data(), in.data(), gker.data(), d); },
       [&] { kern::conv2d_backward_kernel_omp(out.data(), in.data(), gker.data(), d); }},
      {"backward_bias",
       [&] { kern::conv2d_backward_bias_serial(out.data(), gbias.data(), d); },
       [&] { kern::conv2d_backward_bias_omp(out.data(), gbias.data(), d); }},
  };

  std::printf("conv2d b=%lld cin=%lld cout=%lld %lldx%lld k=%lldx%lld (%.0fM flop)\n",
              static_cast<long long>(d.batch), static_cast<long long>(d.cin),
              static_cast<long long>(d.cout), static_cast<long long>(d.h),
              static_cast<long long>(d.w), static_cast<long long>(d.kh),
              static_cast<long long>(d.kw), macs / 1e6);
  for (auto& row : rows) {
    const double ts = seconds_per_call(row.serial, reps);
    const double tp = seconds_per_call(row.omp, reps);
    std::printf("  %-16s serial %8.3f ms   omp %8.3f ms   speedup %.2fx   (%.2f GFLOP/s omp)\n",
                row.name, ts * 1e3, tp * 1e3, ts / tp, macs / tp / 1e9);
  }
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d\n", omp_get_max_threads());
  bench_case({10, 2, 64, 64, 8, 9, 9}, reps);
  bench_case({10, 8, 64, 64, 8, 3, 3}, reps);
  bench_case({10, 8, 64, 64, 3, 5, 5}, reps);
  bench_case({1, 2, 128, 128, 64, 9, 9}, std::max(1, reps / 2));
  return 0;
}
