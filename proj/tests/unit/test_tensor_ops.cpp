#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mpnn/errors.hpp"
#include "mpnn/tensor.hpp"
#include "test_util.hpp"

using namespace mpnn;
using mpnn::testing::max_grad_error;
using mpnn::testing::random_tensor;

namespace {

TEST(Tensor, ShapeAndDataAgree) {
  const Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Tensor({0, 2}), DimensionError);
  EXPECT_EQ(Tensor::vector({1, 2, 3}).rows(), 1u);
  EXPECT_THROW(t.reshaped({4}), DimensionError);
}

TEST(Matmul, IdentityLeavesVectorUnchanged) {
  Tape tape(false);
  const Var y = matmul(tape.constant(Tensor::matrix({{1, 0}, {0, 1}})),
                       tape.constant(Tensor::matrix({{2}, {3}})));
  EXPECT_EQ(y.value().values(), (std::vector<double>{2, 3}));
}

TEST(Matmul, HandArithmetic) {
  Tape tape(false);
  const Var y = matmul(tape.constant(Tensor::matrix({{1, 2}, {3, 4}})),
                       tape.constant(Tensor::matrix({{1}, {1}})));
  EXPECT_EQ(y.value().values(), (std::vector<double>{3, 7}));
}

TEST(Matmul, InnerDimensionMismatch) {
  Tape tape(false);
  EXPECT_THROW(matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))),
               DimensionError);
}

TEST(Matmul, GradientsMatchFiniteDifferences) {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  const Tensor w = random_tensor({3, 2}, rng);
  const double err = max_grad_error(
      [&](Tape& t) { return sum(mul(matmul(t.bind(a), t.bind(b)), t.bind(w))); }, {&a, &b});
  EXPECT_LT(err, 1e-6);
}

TEST(Pointwise, SigmoidAtZero) {
  Tape tape(false);
  EXPECT_DOUBLE_EQ(sigmoid(tape.constant(Tensor::scalar(0.0))).value().item(), 0.5);
}

TEST(Pointwise, ReluNegativeHasZeroGradient) {
  Tensor x = Tensor::scalar(-3.0);
  x.set_requires_grad(true);
  Tape tape;
  const Var y = relu(tape.bind(x));
  EXPECT_EQ(y.value().item(), 0.0);
  tape.backward(y);
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Pointwise, TanhGradientAt07) {
  Tensor x = Tensor::scalar(0.7);
  const double err = max_grad_error([&](Tape& t) { return tanh(t.bind(x)); }, {&x});
  EXPECT_LT(err, 1e-6);
  x.zero_grad();
  Tape tape;
  tape.backward(tanh(tape.bind(x)));
  EXPECT_NEAR(x.grad()[0], 1.0 - std::tanh(0.7) * std::tanh(0.7), 1e-15);
}

TEST(Pointwise, SoftplusIsStableAndSmooth) {
  Tape tape(false);
  const Var y = softplus(tape.constant(Tensor::vector({-800.0, 0.0, 800.0})));
  EXPECT_NEAR(y.value()[0], 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(y.value()[1], std::log(2.0));
  EXPECT_DOUBLE_EQ(y.value()[2], 800.0);
  Rng rng(2);
  Tensor x = random_tensor({2, 5}, rng, -4.0, 4.0);
  EXPECT_LT(max_grad_error([&](Tape& t) { return sum(softplus(t.bind(x))); }, {&x}), 1e-6);
}

TEST(Pointwise, AllActivationsGradCheck) {
  Rng rng(3);
  for (Pointwise op : {Pointwise::kSigmoid, Pointwise::kTanh, Pointwise::kSoftplus,
                       Pointwise::kIdentity}) {
    Tensor x = random_tensor({3, 3}, rng, -2.0, 2.0);
    const Tensor w = random_tensor({3, 3}, rng);
    EXPECT_LT(max_grad_error([&](Tape& t) { return sum(mul(pointwise(op, t.bind(x)), t.bind(w))); },
                             {&x}),
              1e-6)
        << pointwise_name(op);
  }
}

TEST(Binary, ShapeRules) {
  Tape tape(false);
  const Var a = tape.constant(Tensor::vector({1, 2, 3}));
  const Var s = tape.constant(Tensor::scalar(2.0));
  EXPECT_EQ((a * s).value().values(), (std::vector<double>{2, 4, 6}));
  EXPECT_EQ((s - a).value().values(), (std::vector<double>{1, 0, -1}));
  EXPECT_THROW(add(a, tape.constant(Tensor::vector({1, 2}))), DimensionError);
}

TEST(Binary, GradientsIncludingScalarBroadcast) {
  Rng rng(4);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({2, 3}, rng);
  Tensor s = Tensor::scalar(0.3);
  const double err = max_grad_error(
      [&](Tape& t) {
        const Var x = t.bind(a), y = t.bind(b), c = t.bind(s);
        return sum(mul(add(x, c), sub(y, mul(x, c))) + one_minus(scale(y, 0.5)));
      },
      {&a, &b, &s});
  EXPECT_LT(err, 1e-6);
}

TEST(Forward, NonFiniteIsAnError) {
  Tape tape(false);
  const double big = std::numeric_limits<double>::max();
  EXPECT_THROW(scale(tape.constant(Tensor::scalar(big)), 10.0), DivergenceError);
}

TEST(Reduce, SumAlongAxis0) {
  Tape tape(false);
  const Var y = reduce_sum(tape.constant(Tensor::matrix({{1, 2}, {3, 4}})), 0);
  EXPECT_EQ(y.value().values(), (std::vector<double>{4, 6}));
  EXPECT_THROW(reduce_sum(tape.constant(Tensor::matrix({{1, 2}})), 2), DimensionError);
}

TEST(Reduce, BackwardBroadcasts) {
  Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  x.set_requires_grad(true);
  Tape tape;
  const Var r = reduce_sum(tape.bind(x), 1);
  tape.backward(sum(mul(r, tape.constant(Tensor::vector({10, 20})))));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{10, 10, 20, 20}));
}

TEST(Softmax, UniformOnEqualScores) {
  Tape tape(false);
  const Var y = softmax(tape.constant(Tensor::vector({0, 0, 0})), 0);
  for (double v : y.value().values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndGradCheck) {
  Rng rng(5);
  Tensor x = random_tensor({4, 6}, rng, -30.0, 30.0);
  for (std::size_t axis : {0u, 1u}) {
    Tape tape(false);
    const Tensor y = softmax(tape.constant(x), axis).value();
    const std::size_t outer = axis == 1 ? 4 : 6;
    const std::size_t inner = axis == 1 ? 6 : 4;
    for (std::size_t o = 0; o < outer; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = axis == 1 ? y.at(o, i) : y.at(i, o);
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
  Tensor z = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({3, 4}, rng);
  EXPECT_LT(max_grad_error([&](Tape& t) { return sum(mul(softmax(t.bind(z), 1), t.bind(w))); },
                           {&z}),
            1e-6);
}

TEST(Concat, JoinsAndSplitsGradient) {
  Tensor a = Tensor::vector({1, 2});
  Tensor b = Tensor::vector({3});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape tape;
  const Var c = concat({tape.bind(a), tape.bind(b)}, 0);
  EXPECT_EQ(c.value().values(), (std::vector<double>{1, 2, 3}));
  tape.backward(sum(mul(c, tape.constant(Tensor::vector({4, 5, 6})))));
  EXPECT_EQ(a.grad()[0], 4.0);
  EXPECT_EQ(a.grad()[1], 5.0);
  EXPECT_EQ(b.grad()[0], 6.0);
}

TEST(Concat, RowsAndMismatch) {
  Tape tape(false);
  const Var c = concat({tape.constant(Tensor::matrix({{1, 2}})),
                        tape.constant(Tensor::matrix({{3, 4}, {5, 6}}))},
                       0);
  EXPECT_EQ(c.value().shape(), (Shape{3, 2}));
  EXPECT_THROW(concat({tape.constant(Tensor({1, 2})), tape.constant(Tensor({1, 3}))}, 0),
               DimensionError);
}

TEST(Indexing, GatherScatterSliceGradCheck) {
  Rng rng(6);
  Tensor x = random_tensor({4, 3}, rng);
  const Tensor w = random_tensor({3, 2}, rng);
  const std::vector<std::size_t> gidx = {2, 0, 2, 3, 1};
  const std::vector<std::size_t> sidx = {1, 1, 0, 2, 1};
  const double err = max_grad_error(
      [&](Tape& t) {
        const Var g = gather_rows(t.bind(x), gidx);
        const Var s = scatter_add_rows(g, sidx, 3);
        return sum(mul(slice_cols(s, 1, 3), t.bind(w)));
      },
      {&x});
  EXPECT_LT(err, 1e-6);
}

TEST(Indexing, ScatterLeavesUntouchedRowsZero) {
  Tape tape(false);
  const Var s = scatter_add_rows(tape.constant(Tensor::matrix({{1, 1}, {2, 2}})),
                                 std::vector<std::size_t>{2, 2}, 4);
  EXPECT_EQ(s.value().values(), (std::vector<double>{0, 0, 0, 0, 3, 3, 0, 0}));
}

TEST(GatheredMatvec, MatchesDenseOracleAndGradCheck) {
  Rng rng(7);
  Tensor mats = random_tensor({3, 2 * 4}, rng);  // three 2 x 4 matrices
  Tensor vecs = random_tensor({5, 4}, rng);
  const std::vector<std::size_t> mi = {0, 2, 1, 2};
  const std::vector<std::size_t> vi = {4, 0, 0, 3};
  Tape tape(false);
  const Tensor y = gathered_matvec(tape.constant(mats), mi, tape.constant(vecs), vi, 2, 4).value();
  for (std::size_t e = 0; e < mi.size(); ++e) {
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s += mats.at(mi[e], r * 4 + c) * vecs.at(vi[e], c);
      EXPECT_NEAR(y.at(e, r), s, 1e-12);
    }
  }
  const Tensor w = random_tensor({4, 2}, rng);
  EXPECT_LT(max_grad_error(
                [&](Tape& t) {
                  return sum(mul(gathered_matvec(t.bind(mats), mi, t.bind(vecs), vi, 2, 4),
                                 t.bind(w)));
                },
                {&mats, &vecs}),
            1e-6);
}

TEST(Backward, SumOfSquares) {
  Tensor w = Tensor::vector({1, 2});
  w.set_requires_grad(true);
  Tape tape;
  const Var v = tape.bind(w);
  tape.backward(sum(mul(v, v)));
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], 4.0);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, IndependentLossGivesZeroGradient) {
  Tensor w = Tensor::vector({1, 2});
  w.set_requires_grad(true);
  w.zero_grad();
  Tape tape;
  tape.bind(w);
  tape.backward(sum(tape.constant(Tensor::vector({3, 4}))));
  EXPECT_EQ(w.grad()[0], 0.0);
  EXPECT_EQ(w.grad()[1], 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape tape;
  EXPECT_THROW(tape.backward(tape.constant(Tensor::vector({1, 2}))), ContractError);
}

TEST(Backward, GradientsAccumulateAcrossPasses) {
  Tensor w = Tensor::scalar(3.0);
  w.set_requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(scale(tape.bind(w), 2.0));
  }
  EXPECT_EQ(w.grad()[0], 4.0);
}

TEST(Backward, ReshapeTransposeGradCheck) {
  Rng rng(8);
  Tensor x = random_tensor({2, 6}, rng);
  const Tensor w = random_tensor({4, 3}, rng);
  EXPECT_LT(max_grad_error(
                [&](Tape& t) {
                  return sum(mul(transpose(reshape(t.bind(x), {3, 4})), t.bind(w)));
                },
                {&x}),
            1e-6);
  Tensor b = random_tensor({3}, rng);
  Tensor m = random_tensor({4, 3}, rng);
  EXPECT_LT(max_grad_error([&](Tape& t) { return mean(tanh(add_bias(t.bind(m), t.bind(b)))); },
                           {&m, &b}),
            1e-6);
}

TEST(Determinism, IdenticalInputsGiveIdenticalValues) {
  Rng r1(9), r2(9);
  const Tensor a = random_tensor({5, 5}, r1);
  const Tensor b = random_tensor({5, 5}, r2);
  Tape t1(false), t2(false);
  EXPECT_EQ(softmax(matmul(t1.constant(a), t1.constant(a)), 1).value().values(),
            softmax(matmul(t2.constant(b), t2.constant(b)), 1).value().values());
}

}  // namespace
