#pragma once

// Dense float64 inner-loop kernels.
//
// Every kernel has a scalar reference implementation. Vectorized variants
// (AVX2+FMA on x86-64, NEON on AArch64) are compiled in separate translation
// units and selected at runtime from the CPU's capabilities. All variants
// compute the same mathematical result; they differ only in summation order
// and FMA rounding, which the equivalence tests bound.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mpnn::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Kernel table. Matrix arguments are row-major with an explicit leading
/// dimension. All `*_acc` kernels accumulate into their output.
struct KernelTable {
  Isa isa;

  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out = x (op) y
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*sub)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  // out += x * y
  void (*mul_acc)(const double* x, const double* y, double* out, std::size_t n);

  // C[m x n] += op(A)[m x k] * B[k x n], where element (i, p) of op(A) is
  // a[i * a_row_stride + p * a_col_stride]. Covers A and A^T without copies.
  void (*gemm_acc)(std::size_t m, std::size_t n, std::size_t k,
                   const double* a, std::size_t a_row_stride,
                   std::size_t a_col_stride, const double* b, std::size_t ldb,
                   double* c, std::size_t ldc);

  // C[m x n] += A[m x k] * B^T, with B stored as [n x k].
  void (*gemm_nt_acc)(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc);
};

const KernelTable& scalar_kernels();

/// Returns nullptr when the variant was not compiled for this target or the
/// running CPU lacks the instructions.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

/// Best kernel table for the running CPU, unless overridden.
const KernelTable& active();

/// Kernel tables usable on this machine, scalar first.
std::vector<const KernelTable*> available();

/// Forces a specific ISA. Returns false (and changes nothing) if that
/// variant is unavailable. Not thread-safe against concurrent kernel use.
bool force_isa(Isa isa);

/// Restores automatic selection.
void reset_isa();

// Multiply counter. Forward tensor ops add their scalar multiply count here;
// the message-passing engine reads it to report per-phase costs.
std::uint64_t multiply_count();
void add_multiplies(std::uint64_t count);
void reset_multiply_count();

}  // namespace mpnn::simd
