// Micro-benchmarks for the hot paths: GEMM shapes used by the network
// and end-to-end environment stepping.

#include <chrono>
#include <cstdio>
#include <vector>

#include "ctl/env.hpp"
#include "ctl/gemm.hpp"
#include "ctl/rng.hpp"

using Clock = std::chrono::steady_clock;

static double bench_gemm(int m, int n, int k, int iters) {
  std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n),
      c(static_cast<size_t>(m) * n);
  ctl::Pcg32 rng = ctl::Pcg32::seeded(1);
  for (auto& v : a) v = rng.uniform() - 0.5f;
  for (auto& v : b) v = rng.uniform() - 0.5f;
  ctl::gemm(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n);  // warm
  const auto t0 = Clock::now();
  for (int i = 0; i < iters; ++i) {
    ctl::gemm(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n);
  }
  const auto t1 = Clock::now();
  const double sec = std::chrono::duration<double>(t1 - t0).count();
  const double flops = 2.0 * m * n * k * iters;
  return flops / sec / 1e9;
}

int main() {
  ctl::init_math_backend();

  struct Shape {
    const char* name;
    int m, n, k, iters;
  };
  const Shape shapes[] = {
      {"conv1 fwd  (B=16)", 32, 16 * 81, 100, 2000},
      {"conv2 fwd  (B=16)", 64, 16 * 49, 288, 1500},
      {"fc1   fwd  (B=16)", 256, 16, 3136, 1500},
      {"conv1 fwd  (B=32)", 32, 32 * 81, 100, 1000},
      {"conv2 fwd  (B=32)", 64, 32 * 49, 288, 800},
      {"fc1   fwd  (B=32)", 256, 32, 3136, 800},
      {"fc1   dW   (B=16)", 256, 3136, 16, 1000},
      {"fc1   dX   (B=16)", 3136, 16, 256, 1000},
      {"conv2 dW   (B=16)", 64, 288, 16 * 49, 1000},
      {"conv2 dcol (B=16)", 288, 16 * 49, 64, 1000},
      {"eval  conv2(B=200)", 64, 200 * 49, 288, 100},
      {"act   fc1  (B=1)", 256, 1, 3136, 3000},
  };
  std::puts("GEMM throughput (single thread):");
  for (const auto& s : shapes) {
    const double gf = bench_gemm(s.m, s.n, s.k, s.iters);
    std::printf("  %-20s M=%-5d N=%-5d K=%-5d  %7.2f GFLOP/s\n", s.name, s.m, s.n,
                s.k, gf);
  }

  // Environment stepping throughput.
  {
    ctl::Environment env(ctl::VariantConfig::make(ctl::Variant::V2));
    ctl::Pcg32 rng = ctl::Pcg32::seeded(9);
    const auto t0 = Clock::now();
    long steps = 0;
    for (int ep = 0; ep < 3000; ++ep) {
      env.reset(ep);
      while (!env.terminal()) {
        env.step(static_cast<ctl::Action>(rng.below(3)));
        ++steps;
      }
    }
    const auto t1 = Clock::now();
    const double us = std::chrono::duration<double, std::micro>(t1 - t0).count() / steps;
    std::printf("\nenv step (v2, incl. render+stack): %.2f us/step\n", us);
  }
  return 0;
}
