#pragma once

#include <cstddef>
#include <cstdlib>

#ifdef CTL_USE_OPENBLAS
#include <dlfcn.h>
#endif

namespace ctl {
namespace blas {

// Standard CBLAS ABI constants.
inline constexpr int kRowMajor = 101;
inline constexpr int kNoTrans = 111;
inline constexpr int kTrans = 112;

using SgemmFn = void (*)(int, int, int, int, int, int, float, const float*, int,
                         const float*, int, float, float*, int);
using DgemmFn = void (*)(int, int, int, int, int, int, double, const double*, int,
                         const double*, int, double, double*, int);
using SgemvFn = void (*)(int, int, int, int, float, const float*, int, const float*,
                         int, float, float*, int);
using SetThreadsFn = void (*)(int);

struct Backend {
  SgemmFn sgemm = nullptr;
  DgemmFn dgemm = nullptr;
  SgemvFn sgemv = nullptr;
};

// Loads OpenBLAS lazily so the core-type override below is seen by its
// dynamic-arch init. The stock CPUID table misses some virtualized CPUs
// and silently falls back to a pre-AVX kernel (3-4x slower here).
inline const Backend& backend() {
  static const Backend b = [] {
    Backend r;
#ifdef CTL_USE_OPENBLAS
#if defined(__x86_64__)
    if (!std::getenv("OPENBLAS_CORETYPE")) {
      if (__builtin_cpu_supports("avx512f")) {
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
      } else if (__builtin_cpu_supports("avx2")) {
        setenv("OPENBLAS_CORETYPE", "HASWELL", 1);
      }
    }
#endif
    void* h = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!h) h = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (h) {
      r.sgemm = reinterpret_cast<SgemmFn>(dlsym(h, "cblas_sgemm"));
      r.dgemm = reinterpret_cast<DgemmFn>(dlsym(h, "cblas_dgemm"));
      r.sgemv = reinterpret_cast<SgemvFn>(dlsym(h, "cblas_sgemv"));
      // One BLAS thread: the runner parallelizes across runs, and a fixed
      // thread count keeps results bit-reproducible.
      if (auto set = reinterpret_cast<SetThreadsFn>(dlsym(h, "openblas_set_num_threads"))) {
        set(1);
      }
      if (!r.sgemm || !r.dgemm || !r.sgemv) r = Backend{};
    }
#endif
    return r;
  }();
  return b;
}

}  // namespace blas

namespace detail {

// Row-major reference kernel, used when BLAS is unavailable.
template <typename T>
void gemm_fallback(bool trans_a, bool trans_b, int m, int n, int k, const T* a,
                   int lda, const T* b, int ldb, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) crow[j] = T(0);
  }
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      const T av = trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                           : a[static_cast<std::size_t>(i) * lda + p];
      if (trans_b) {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<std::size_t>(j) * ldb + p];
      } else {
        const T* brow = b + static_cast<std::size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace detail

// C[m x n] = op(A) * op(B), row-major, beta = 0.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
                 int lda, const float* b, int ldb, float* c, int ldc) {
  const auto& blas = blas::backend();
  if (blas.sgemm) {
    if (n == 1 && ldb == 1 && ldc == 1) {
      // single-column case (batch of one): gemv is markedly faster
      blas.sgemv(blas::kRowMajor, trans_a ? blas::kTrans : blas::kNoTrans,
                 trans_a ? k : m, trans_a ? m : k, 1.0f, a, lda, b, 1, 0.0f, c, 1);
      return;
    }
    blas.sgemm(blas::kRowMajor, trans_a ? blas::kTrans : blas::kNoTrans,
               trans_b ? blas::kTrans : blas::kNoTrans, m, n, k, 1.0f, a, lda, b,
               ldb, 0.0f, c, ldc);
    return;
  }
  detail::gemm_fallback(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
                 int lda, const double* b, int ldb, double* c, int ldc) {
  const auto& blas = blas::backend();
  if (blas.dgemm) {
    blas.dgemm(blas::kRowMajor, trans_a ? blas::kTrans : blas::kNoTrans,
               trans_b ? blas::kTrans : blas::kNoTrans, m, n, k, 1.0, a, lda, b,
               ldb, 0.0, c, ldc);
    return;
  }
  detail::gemm_fallback(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc);
}

inline void init_math_backend() { blas::backend(); }

}  // namespace ctl
