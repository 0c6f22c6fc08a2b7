#include <functional>

#include <gtest/gtest.h>

#include "hanmt/grad_check.hpp"
#include "hanmt/han.hpp"
#include "hanmt/model.hpp"
#include "test_support.hpp"

using namespace hanmt;
using hanmt::testing::random_tensor;

namespace {

constexpr double kTolerance = 1e-4;

// Weighted sum so every output element carries a distinct gradient.
Var project(const Var& y, const Tensor& weights) { return sum(mul(y, Var::constant(weights))); }

void check_op(const std::string& name, const std::function<Var(const Var&)>& op, Shape in_shape,
              std::uint64_t seed = 7) {
    Rng rng(seed);
    const Tensor x = random_tensor(in_shape, rng);
    const Tensor w = random_tensor(op(Var::constant(x)).shape(), rng);
    const GradCheckResult r = grad_check([&](const Var& v) { return project(op(v), w); }, x);
    EXPECT_LT(r.max_rel_error, kTolerance) << name << " worst index " << r.worst_index << " analytic " << r.analytic
                                           << " numeric " << r.numeric;
    EXPECT_EQ(r.checked, shape_numel(in_shape));
}

}  // namespace

TEST(GradCheck, ElementwiseOps) {
    Rng rng(1);
    const Var other = Var::constant(random_tensor({3, 4}, rng));
    const Var row = Var::constant(random_tensor({4}, rng));
    check_op("add", [&](const Var& x) { return add(x, other); }, {3, 4});
    check_op("add broadcast lhs", [&](const Var& x) { return add(other, x); }, {4});
    check_op("sub", [&](const Var& x) { return sub(other, x); }, {3, 4});
    check_op("mul", [&](const Var& x) { return mul(x, other); }, {3, 4});
    check_op("mul broadcast", [&](const Var& x) { return mul(other, x); }, {4});
    check_op("mul self", [&](const Var& x) { return mul(x, x); }, {3, 4});
    check_op("mul row", [&](const Var& x) { return mul(x, row); }, {3, 4});
    check_op("affine_scalar", [&](const Var& x) { return affine_scalar(x, -1.5, 0.25); }, {5});
    check_op("sigmoid", [&](const Var& x) { return sigmoid(scale(x, 3.0)); }, {6});
    check_op("relu", [&](const Var& x) { return relu(x); }, {7});
}

TEST(GradCheck, MatrixOps) {
    Rng rng(2);
    const Var b = Var::constant(random_tensor({4, 3}, rng));
    const Var batch = Var::constant(random_tensor({2, 3, 4}, rng));
    check_op("matmul lhs", [&](const Var& x) { return matmul(x, b); }, {2, 4});
    check_op("matmul rhs", [&](const Var& x) { return matmul(batch, x); }, {4, 2});
    check_op("matmul batched", [&](const Var& x) { return matmul(x, transpose(batch)); }, {2, 5, 4});
    check_op("affine weight", [&](const Var& w) { return affine(batch, w); }, {4, 2});
    const Var w = Var::constant(random_tensor({4, 3}, rng));
    check_op("affine bias", [&](const Var& bias) { return affine(batch, w, bias); }, {3});
    check_op("affine vector", [&](const Var& x) { return affine(x, w); }, {4});
}

TEST(GradCheck, ShapeOps) {
    Rng rng(3);
    const Var other = Var::constant(random_tensor({2, 3}, rng));
    check_op("reshape", [&](const Var& x) { return reshape(x, {3, 2}); }, {2, 3});
    check_op("permute", [&](const Var& x) { return permute(x, {2, 0, 1}); }, {2, 3, 4});
    check_op("transpose", [&](const Var& x) { return transpose(x); }, {2, 3, 4});
    check_op("stack", [&](const Var& x) { return stack(std::vector<Var>{x, other, x}, 1); }, {2, 3});
    check_op("slice_rows", [&](const Var& x) { return slice_rows(x, 1, 3); }, {4, 2});
    const std::vector<int> ids{2, 0, 2, 1};
    check_op("gather_rows", [&](const Var& x) { return gather_rows(x, ids); }, {3, 2});
    check_op("sum", [&](const Var& x) { return sum(x); }, {3, 2});
    check_op("mean", [&](const Var& x) { return mean(x); }, {3, 2});
}

TEST(GradCheck, NormalizationOps) {
    Rng rng(4);
    const Tensor keep = Tensor::vector({1, 0, 1, 1});
    const Var gain = Var::constant(random_tensor({5}, rng));
    const Var bias = Var::constant(random_tensor({5}, rng));
    const Var x3 = Var::constant(random_tensor({3, 5}, rng));
    check_op("softmax last", [&](const Var& x) { return softmax(x, 1); }, {3, 4});
    check_op("softmax first", [&](const Var& x) { return softmax(x, 0); }, {3, 4});
    check_op("softmax masked", [&](const Var& x) { return softmax(x, 1, &keep); }, {3, 4});
    check_op("layer_norm input", [&](const Var& x) { return layer_norm(x, gain, bias); }, {3, 5});
    check_op("layer_norm gain", [&](const Var& g) { return layer_norm(x3, g, bias); }, {5});
    check_op("layer_norm bias", [&](const Var& b) { return layer_norm(x3, gain, b); }, {5});
    const std::vector<int> targets{2, kPadId, 0};
    check_op("cross_entropy", [&](const Var& x) { return cross_entropy_smoothed(x, targets, 0.1, kPadId); }, {3, 5});
    check_op("cross_entropy unsmoothed", [&](const Var& x) { return cross_entropy_smoothed(x, targets, 0.0, kPadId); },
             {3, 5});
}

TEST(GradCheck, DropoutWithFixedMask) {
    check_op("dropout", [&](const Var& x) {
        Rng rng(11);  // same mask on every evaluation
        return dropout(x, 0.3, true, rng);
    }, {20});
}

TEST(GradCheck, MultiHeadAttention) {
    Rng rng(5);
    ParameterSet params;
    const AttentionParams attn = make_attention(params, "attn", 8, 2, rng);
    const Tensor keys = random_tensor({5, 8}, rng);
    const Tensor w = random_tensor({3, 8}, rng);
    const Tensor mask = Tensor::vector({1, 1, 0, 1, 1});
    auto loss = [&](const Var& q) {
        ParamBinding b(false);
        const ForwardContext ctx{b};
        const Var k = Var::constant(keys);
        return project(multi_head_attention(ctx, attn, q, k, k, &mask, "test").output, w);
    };
    const auto r = grad_check(loss, random_tensor({3, 8}, rng));
    EXPECT_LT(r.max_rel_error, kTolerance);

    std::vector<Parameter*> all;
    for (auto& p : params) all.push_back(p.get());
    const Tensor q = random_tensor({3, 8}, rng);
    const auto rp = grad_check_parameters(
        [&](ParamBinding& b) {
            const ForwardContext ctx{b};
            const Var k = Var::constant(keys);
            return project(multi_head_attention(ctx, attn, Var::constant(q), k, k, &mask, "test").output, w);
        },
        all);
    EXPECT_LT(rp.max_rel_error, kTolerance) << rp.worst_index << " " << rp.analytic << " " << rp.numeric;
}

TEST(GradCheck, HanBlockParameters) {
    Rng rng(6);
    ParameterSet params;
    HanBlock block = make_han_block(params, "han", 8, 16, 2, false, 0.0, rng);
    // non-zero gates so W_h and W_d see a generic gradient
    for (auto& p : params) {
        if (p->name.find("gate") != std::string::npos) p->value = random_tensor(p->value.shape(), rng, 0.3);
    }
    ContextCache cache(2, false);
    cache.push({random_tensor({3, 8}, rng), Tensor({3}, 1.0), {4, 5, 3}});
    cache.push({random_tensor({2, 8}, rng), Tensor({2}, 1.0), {6, 3}});
    const Tensor h = random_tensor({4, 8}, rng);
    const Tensor w = random_tensor({4, 8}, rng);
    std::vector<Parameter*> all;
    for (auto& p : params) all.push_back(p.get());
    const auto r = grad_check_parameters(
        [&](ParamBinding& b) {
            const ForwardContext ctx{b};
            return project(han_apply(ctx, HanSite::encoder, Var::constant(h), cache, block), w);
        },
        all);
    EXPECT_LT(r.max_rel_error, kTolerance) << "worst " << r.worst_index << " " << r.analytic << " " << r.numeric;

    const auto rh = grad_check(
        [&](const Var& x) {
            ParamBinding b(false);
            const ForwardContext ctx{b};
            return project(han_apply(ctx, HanSite::encoder, x, cache, block), w);
        },
        h);
    EXPECT_LT(rh.max_rel_error, kTolerance);
}

TEST(GradCheck, TinyJointModelEndToEnd) {
    Rng rng(8);
    const ModelConfig config = hanmt::testing::tiny_config(HanMode::joint, 8, 2);
    Model model(config, 3);
    for (auto& p : model.parameters()) {
        if (p->name.find("gate") != std::string::npos) p->value = random_tensor(p->value.shape(), rng, 0.3);
    }
    const EncodedDocument doc = hanmt::testing::random_document(config, 3, rng, 2, 2);
    ContextCache cache = model.make_cache();
    for (std::size_t i = 0; i < 2; ++i) {
        ParamBinding b(false);
        const ForwardContext ctx{b};
        const Encoded enc = model.encode(ctx, doc.pairs[i].source, cache);
        const Decoded dec = model.decode(ctx, doc.pairs[i].target_in, enc, cache);
        model.push_context(cache, enc, dec);
    }
    ASSERT_EQ(cache.size(), 2u);
    const EncodedPair& pair = doc.pairs[2];
    std::vector<Parameter*> all;
    for (auto& p : model.parameters()) all.push_back(p.get());
    const auto r = grad_check_parameters(
        [&](ParamBinding& b) {
            const ForwardContext ctx{b};
            const Encoded enc = model.encode(ctx, pair.source, cache);
            const Decoded dec = model.decode(ctx, pair.target_in, enc, cache);
            return cross_entropy_smoothed(model.classify(ctx, dec.final), pair.target_out, 0.1, kPadId);
        },
        all);
    EXPECT_LT(r.max_rel_error, kTolerance) << "worst index " << r.worst_index;
    EXPECT_EQ(r.checked, model.parameters().element_count());
}
