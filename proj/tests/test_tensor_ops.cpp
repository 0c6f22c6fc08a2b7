#include <cmath>

#include <gtest/gtest.h>

#include "hanmt/ops.hpp"
#include "test_support.hpp"

using namespace hanmt;

namespace {

void expect_values(const Tensor& t, std::initializer_list<double> expected, double tol = 1e-12) {
    ASSERT_EQ(t.size(), expected.size());
    std::size_t i = 0;
    for (double e : expected) EXPECT_NEAR(t[i++], e, tol) << "index " << i - 1;
}

}  // namespace

TEST(Tensor, RejectsDataOfWrongSize) {
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, IndexingIsRowMajor) {
    const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(t.at({1, 0}), 4.0);
    EXPECT_EQ(t.at({0, 2}), 3.0);
    EXPECT_EQ(t.rows(1, 2), Tensor::matrix({{4, 5, 6}}));
}

TEST(Ops, AddBroadcastsSuffixShapedOperand) {
    const Var a = Var::constant(Tensor::matrix({{1, 2}, {3, 4}}));
    const Var b = Var::constant(Tensor::vector({10, 20}));
    expect_values(add(a, b).value(), {11, 22, 13, 24});
    expect_values(mul(a, b).value(), {10, 40, 30, 80});
    EXPECT_THROW(add(b, a), DimensionError);
}

TEST(Ops, MatmulMatchesHandProduct) {
    const Var a = Var::constant(Tensor::matrix({{1, 2}, {3, 4}}));
    const Var b = Var::constant(Tensor::matrix({{5, 6}, {7, 8}}));
    expect_values(matmul(a, b).value(), {19, 22, 43, 50});
    expect_values(matmul(a, transpose(b)).value(), {17, 23, 39, 53});
}

TEST(Ops, MatmulBroadcastsBatchAxes) {
    // [2, 1, 2] x [2, 1] -> [2, 1, 1]
    const Var a = Var::constant(Tensor({2, 1, 2}, {1, 2, 3, 4}));
    const Var b = Var::constant(Tensor({2, 1}, {1, 1}));
    const Tensor out = matmul(a, b).value();
    EXPECT_EQ(out.shape(), (Shape{2, 1, 1}));
    expect_values(out, {3, 7});
    EXPECT_THROW(matmul(a, Var::constant(Tensor({3, 1}))), DimensionError);
}

TEST(Ops, SoftmaxMatchesClosedForm) {
    const Var x = Var::constant(Tensor::vector({1, 2, 3}));
    expect_values(softmax(x, 0).value(), {0.09003057317038046, 0.24472847105479767, 0.6652409557748219}, 1e-15);
}

TEST(Ops, SoftmaxIsShiftInvariantForHugeLogits) {
    const Var x = Var::constant(Tensor::vector({1001, 1002, 1003}));
    expect_values(softmax(x, 0).value(), {0.09003057317038046, 0.24472847105479767, 0.6652409557748219}, 1e-15);
}

TEST(Ops, MaskedSoftmaxGivesExactZeros) {
    const Var x = Var::constant(Tensor::matrix({{1, 2, 3}, {1, 2, 3}}));
    const Tensor keep = Tensor::vector({1, 0, 1});
    const Tensor y = softmax(x, 1, &keep).value();
    EXPECT_EQ(y.at({0, 1}), 0.0);
    EXPECT_NEAR(y.at({1, 0}), 0.11920292202211755, 1e-15);
    const Tensor none = Tensor::vector({0, 0, 0});
    EXPECT_THROW(softmax(x, 1, &none), NumericError);
}

TEST(Ops, LayerNormUsesPopulationVariance) {
    const Var x = Var::constant(Tensor::vector({1, 2, 3}));
    const Var g = Var::constant(Tensor::vector({1, 1, 1}));
    const Var b = Var::constant(Tensor::vector({0, 0, 0}));
    expect_values(layer_norm(x, g, b).value(), {-1.224743952833969, 0.0, 1.224743952833969}, 1e-12);
}

TEST(Ops, SigmoidIsStableAtExtremes) {
    const Tensor y = sigmoid(Var::constant(Tensor::vector({-1000, 0, 1000}))).value();
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 0.5);
    EXPECT_EQ(y[2], 1.0);
}

TEST(Ops, SmoothedCrossEntropyMatchesKlOracle) {
    // uniform logits, smoothing 0.1, V=4: KL(q || 1/4) = sum q ln q + ln 4
    const Var logits = Var::constant(Tensor({1, 4}, 0.0));
    const std::vector<int> target{1};
    EXPECT_NEAR(cross_entropy_smoothed(logits, target, 0.1, kPadId).value().item(), 0.9513501588616313, 1e-12);
}

TEST(Ops, UnsmoothedCrossEntropyIsNegativeLogLikelihood) {
    const Var logits = Var::constant(Tensor::matrix({{-1, 0, 2}, {5, 5, 5}}));
    const std::vector<int> targets{2, kPadId};  // second row is padding
    EXPECT_NEAR(cross_entropy_smoothed(logits, targets, 0.0, kPadId).value().item(), 0.16984601955628564, 1e-12);
    const std::vector<int> all_pad{kPadId, kPadId};
    EXPECT_THROW(cross_entropy_smoothed(logits, all_pad, 0.0, kPadId), std::exception);
}

TEST(Ops, DropoutContract) {
    Rng rng(3);
    const Var x = Var::constant(Tensor({1000}, 1.0));
    EXPECT_EQ(dropout(x, 0.5, false, rng).node(), x.node());
    EXPECT_EQ(dropout(x, 0.0, true, rng).node(), x.node());
    EXPECT_THROW(dropout(x, 1.0, true, rng), ConfigError);
    const Tensor y = dropout(x, 0.5, true, rng).value();
    std::size_t kept = 0;
    for (double v : y.data()) {
        EXPECT_TRUE(v == 0.0 || v == 2.0);
        kept += v != 0.0;
    }
    EXPECT_GT(kept, 400u);
    EXPECT_LT(kept, 600u);
}

TEST(Ops, ShapeOpsMoveValuesCorrectly) {
    const Var x = Var::constant(Tensor({2, 3}, {0, 1, 2, 3, 4, 5}));
    expect_values(permute(x, {1, 0}).value(), {0, 3, 1, 4, 2, 5});
    expect_values(slice_rows(x, 1, 2).value(), {3, 4, 5});
    const std::vector<Var> parts{x, x};
    EXPECT_EQ(stack(parts, 1).shape(), (Shape{2, 2, 3}));
    expect_values(stack(parts, 1).value(), {0, 1, 2, 0, 1, 2, 3, 4, 5, 3, 4, 5});
    const std::vector<int> ids{1, 0, 1};
    expect_values(gather_rows(x, ids).value(), {3, 4, 5, 0, 1, 2, 3, 4, 5});
    EXPECT_THROW(reshape(x, {4}), DimensionError);
}

TEST(Autodiff, GradientsAccumulateOverSharedInputs) {
    const Var x = Var::leaf(Tensor::vector({2, 3}));
    const Var y = sum(add(mul(x, x), x));  // d/dx = 2x + 1
    y.backward();
    expect_values(x.grad(), {5, 7});
}

TEST(Autodiff, ConstantsNeverReceiveGradients) {
    const Var c = Var::constant(Tensor::vector({1, 2}));
    const Var x = Var::leaf(Tensor::vector({3, 4}));
    sum(mul(c, x)).backward();
    EXPECT_FALSE(c.has_grad());
    expect_values(x.grad(), {1, 2});
}
