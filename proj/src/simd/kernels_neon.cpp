#include "mpnn/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace mpnn::simd {
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_neon(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_neon(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_neon(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc_neon(const double* x, const double* y, double* out,
                  std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i,
              vfmaq_f64(vld1q_f64(out + i), vld1q_f64(x + i), vld1q_f64(y + i)));
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

void gemm_acc_neon(std::size_t m, std::size_t n, std::size_t k,
                   const double* a, std::size_t a_rs, std::size_t a_cs,
                   const double* b, std::size_t ldb, double* c,
                   std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a + i * a_rs;
    double* c_row = c + i * ldc;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      float64x2_t c0 = vld1q_f64(c_row + j);
      float64x2_t c1 = vld1q_f64(c_row + j + 2);
      float64x2_t c2 = vld1q_f64(c_row + j + 4);
      float64x2_t c3 = vld1q_f64(c_row + j + 6);
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(a_row[p * a_cs]);
        const double* b_row = b + p * ldb + j;
        c0 = vfmaq_f64(c0, av, vld1q_f64(b_row));
        c1 = vfmaq_f64(c1, av, vld1q_f64(b_row + 2));
        c2 = vfmaq_f64(c2, av, vld1q_f64(b_row + 4));
        c3 = vfmaq_f64(c3, av, vld1q_f64(b_row + 6));
      }
      vst1q_f64(c_row + j, c0);
      vst1q_f64(c_row + j + 2, c1);
      vst1q_f64(c_row + j + 4, c2);
      vst1q_f64(c_row + j + 6, c3);
    }
    for (; j < n; ++j) {
      double s = c_row[j];
      for (std::size_t p = 0; p < k; ++p) s += a_row[p * a_cs] * b[p * ldb + j];
      c_row[j] = s;
    }
  }
}

void gemm_nt_acc_neon(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot_neon(a + i * lda, b + j * ldb, k);
    }
  }
}

}  // namespace

// NEON is mandatory on AArch64, so no runtime probe is needed.
const KernelTable* neon_kernels() {
  static const KernelTable table{
      Isa::kNeon,   dot_neon,      axpy_neon,
      add_neon,     sub_neon,      mul_neon,
      mul_acc_neon, gemm_acc_neon, gemm_nt_acc_neon,
  };
  return &table;
}

}  // namespace mpnn::simd

#else

namespace mpnn::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace mpnn::simd

#endif
