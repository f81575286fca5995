#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mpnn/random.hpp"
#include "mpnn/simd/kernels.hpp"
#include "mpnn/tensor.hpp"

namespace simd = mpnn::simd;

namespace {

std::vector<double> random_vec(mpnn::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// Accumulation order differs between variants; bound by n * eps * magnitude.
double tolerance(std::size_t n) { return 1e-14 * double(n + 1) * 8.0; }

class KernelEquivalence : public ::testing::TestWithParam<std::size_t> {};

TEST_P(KernelEquivalence, VectorKernelsMatchScalar) {
  const std::size_t n = GetParam();
  mpnn::Rng rng(100 + n);
  const auto x = random_vec(rng, n);
  const auto y = random_vec(rng, n);
  const simd::KernelTable& ref = simd::scalar_kernels();
  for (const simd::KernelTable* k : simd::available()) {
    SCOPED_TRACE(std::string(simd::isa_name(k->isa)));
    EXPECT_NEAR(k->dot(x.data(), y.data(), n), ref.dot(x.data(), y.data(), n), tolerance(n));

    std::vector<double> a = y, b = y;
    k->axpy(0.75, x.data(), a.data(), n);
    ref.axpy(0.75, x.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);

    std::vector<double> o1(n), o2(n);
    k->add(x.data(), y.data(), o1.data(), n);
    ref.add(x.data(), y.data(), o2.data(), n);
    EXPECT_EQ(o1, o2);
    k->sub(x.data(), y.data(), o1.data(), n);
    ref.sub(x.data(), y.data(), o2.data(), n);
    EXPECT_EQ(o1, o2);
    k->mul(x.data(), y.data(), o1.data(), n);
    ref.mul(x.data(), y.data(), o2.data(), n);
    EXPECT_EQ(o1, o2);

    std::vector<double> c1 = x, c2 = x;
    k->mul_acc(x.data(), y.data(), c1.data(), n);
    ref.mul_acc(x.data(), y.data(), c2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(c1[i], c2[i], 1e-15);
  }
}

INSTANTIATE_TEST_SUITE_P(Lengths, KernelEquivalence,
                         ::testing::Values(0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 33, 100, 1023));

struct GemmShape {
  std::size_t m, n, k;
};

class GemmEquivalence : public ::testing::TestWithParam<GemmShape> {};

TEST_P(GemmEquivalence, AllLayoutsMatchScalar) {
  const auto [m, n, k] = GetParam();
  mpnn::Rng rng(m * 31 + n * 7 + k);
  const auto a = random_vec(rng, m * k);
  const auto b = random_vec(rng, k * n);
  const auto bt = random_vec(rng, n * k);
  const auto c0 = random_vec(rng, m * n);
  const simd::KernelTable& ref = simd::scalar_kernels();
  for (const simd::KernelTable* kt : simd::available()) {
    SCOPED_TRACE(std::string(simd::isa_name(kt->isa)));
    // A row-major.
    std::vector<double> c1 = c0, c2 = c0;
    kt->gemm_acc(m, n, k, a.data(), k, 1, b.data(), n, c1.data(), n);
    ref.gemm_acc(m, n, k, a.data(), k, 1, b.data(), n, c2.data(), n);
    for (std::size_t i = 0; i < m * n; ++i) EXPECT_NEAR(c1[i], c2[i], tolerance(k));
    // A read transposed from a [k x m] buffer.
    c1 = c0;
    c2 = c0;
    kt->gemm_acc(m, n, k, a.data(), 1, m, b.data(), n, c1.data(), n);
    ref.gemm_acc(m, n, k, a.data(), 1, m, b.data(), n, c2.data(), n);
    for (std::size_t i = 0; i < m * n; ++i) EXPECT_NEAR(c1[i], c2[i], tolerance(k));
    // B^T.
    c1 = c0;
    c2 = c0;
    kt->gemm_nt_acc(m, n, k, a.data(), k, bt.data(), k, c1.data(), n);
    ref.gemm_nt_acc(m, n, k, a.data(), k, bt.data(), k, c2.data(), n);
    for (std::size_t i = 0; i < m * n; ++i) EXPECT_NEAR(c1[i], c2[i], tolerance(k));
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, GemmEquivalence,
                         ::testing::Values(GemmShape{1, 1, 1}, GemmShape{1, 7, 3},
                                           GemmShape{3, 4, 2}, GemmShape{5, 5, 5},
                                           GemmShape{8, 9, 16}, GemmShape{13, 17, 11},
                                           GemmShape{32, 32, 32}, GemmShape{2, 200, 25}));

TEST(SimdDispatch, ScalarReferenceMatchesNaiveProduct) {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};  // 2 x 3
  const std::vector<double> b = {7, 8, 9, 10, 11, 12};  // 3 x 2
  std::vector<double> c(4, 0.0);
  simd::scalar_kernels().gemm_acc(2, 2, 3, a.data(), 3, 1, b.data(), 2, c.data(), 2);
  EXPECT_EQ(c, (std::vector<double>{58, 64, 139, 154}));
}

TEST(SimdDispatch, ForceAndResetIsa) {
  ASSERT_TRUE(simd::force_isa(simd::Isa::kScalar));
  EXPECT_EQ(simd::active().isa, simd::Isa::kScalar);
  simd::reset_isa();
  EXPECT_EQ(simd::available().front()->isa, simd::Isa::kScalar);
  for (simd::Isa isa : {simd::Isa::kAvx2, simd::Isa::kNeon}) {
    const bool present = isa == simd::Isa::kAvx2 ? simd::avx2_kernels() != nullptr
                                                 : simd::neon_kernels() != nullptr;
    EXPECT_EQ(simd::force_isa(isa), present);
    simd::reset_isa();
  }
}

TEST(SimdDispatch, TensorMatmulAgreesAcrossIsas) {
  mpnn::Rng rng(5);
  std::vector<double> av(6 * 9), bv(9 * 5);
  for (double& v : av) v = rng.uniform(-1, 1);
  for (double& v : bv) v = rng.uniform(-1, 1);
  std::vector<std::vector<double>> results;
  for (const simd::KernelTable* k : simd::available()) {
    simd::force_isa(k->isa);
    mpnn::Tape tape(false);
    const mpnn::Var c = mpnn::matmul(tape.constant(mpnn::Tensor::matrix(6, 9, av)),
                                     tape.constant(mpnn::Tensor::matrix(9, 5, bv)));
    results.push_back(c.value().values());
  }
  simd::reset_isa();
  for (std::size_t r = 1; r < results.size(); ++r) {
    for (std::size_t i = 0; i < results[0].size(); ++i) {
      EXPECT_NEAR(results[r][i], results[0][i], 1e-13);
    }
  }
}

TEST(SimdDispatch, MultiplyCounter) {
  simd::reset_multiply_count();
  mpnn::Tape tape(false);
  mpnn::matmul(tape.constant(mpnn::Tensor({3, 4})), tape.constant(mpnn::Tensor({4, 2})));
  EXPECT_EQ(simd::multiply_count(), 3u * 4u * 2u);
  simd::reset_multiply_count();
  EXPECT_EQ(simd::multiply_count(), 0u);
}

}  // namespace
