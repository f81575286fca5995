// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.

#include "mpnn/simd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace mpnn::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

template <typename VecOp, typename ScalarOp>
inline void binary(const double* x, const double* y, double* out,
                   std::size_t n, VecOp vop, ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = sop(x[i], y[i]);
}

void add_avx2(const double* x, const double* y, double* out, std::size_t n) {
  binary(x, y, out, n, [](__m256d a, __m256d b) { return _mm256_add_pd(a, b); },
         [](double a, double b) { return a + b; });
}

void sub_avx2(const double* x, const double* y, double* out, std::size_t n) {
  binary(x, y, out, n, [](__m256d a, __m256d b) { return _mm256_sub_pd(a, b); },
         [](double a, double b) { return a - b; });
}

void mul_avx2(const double* x, const double* y, double* out, std::size_t n) {
  binary(x, y, out, n, [](__m256d a, __m256d b) { return _mm256_mul_pd(a, b); },
         [](double a, double b) { return a * b; });
}

void mul_acc_avx2(const double* x, const double* y, double* out,
                  std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i),
                                              _mm256_loadu_pd(y + i),
                                              _mm256_loadu_pd(out + i)));
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

// Register tile: one row of C, 16 columns held in four accumulators across
// the whole k loop.
void gemm_acc_avx2(std::size_t m, std::size_t n, std::size_t k,
                   const double* a, std::size_t a_rs, std::size_t a_cs,
                   const double* b, std::size_t ldb, double* c,
                   std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a + i * a_rs;
    double* c_row = c + i * ldc;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = _mm256_loadu_pd(c_row + j);
      __m256d c1 = _mm256_loadu_pd(c_row + j + 4);
      __m256d c2 = _mm256_loadu_pd(c_row + j + 8);
      __m256d c3 = _mm256_loadu_pd(c_row + j + 12);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(a_row[p * a_cs]);
        const double* b_row = b + p * ldb + j;
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + 4), c1);
        c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + 8), c2);
        c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + 12), c3);
      }
      _mm256_storeu_pd(c_row + j, c0);
      _mm256_storeu_pd(c_row + j + 4, c1);
      _mm256_storeu_pd(c_row + j + 8, c2);
      _mm256_storeu_pd(c_row + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = _mm256_loadu_pd(c_row + j);
      for (std::size_t p = 0; p < k; ++p) {
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(a_row[p * a_cs]),
                             _mm256_loadu_pd(b + p * ldb + j), c0);
      }
      _mm256_storeu_pd(c_row + j, c0);
    }
    for (; j < n; ++j) {
      double s = c_row[j];
      for (std::size_t p = 0; p < k; ++p) s += a_row[p * a_cs] * b[p * ldb + j];
      c_row[j] = s;
    }
  }
}

void gemm_nt_acc_avx2(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot_avx2(a + i * lda, b + j * ldb, k);
    }
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{
      Isa::kAvx2,   dot_avx2,      axpy_avx2,
      add_avx2,     sub_avx2,      mul_avx2,
      mul_acc_avx2, gemm_acc_avx2, gemm_nt_acc_avx2,
  };
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &table : nullptr;
}

}  // namespace mpnn::simd

#else

namespace mpnn::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace mpnn::simd

#endif
