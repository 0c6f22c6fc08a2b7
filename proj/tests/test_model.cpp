#include <cmath>

#include <gtest/gtest.h>

#include "hanmt/model.hpp"
#include "test_support.hpp"

using namespace hanmt;
using hanmt::testing::random_tensor;
using hanmt::testing::tiny_config;

namespace {

struct ForwardRun {
    Tensor enc;
    Tensor dec;
    Tensor align;
    Tensor logits;
};

ForwardRun forward(const Model& m, const std::vector<int>& src, const std::vector<int>& tgt_in,
            const ContextCache* cache = nullptr) {
    const ContextCache empty = m.make_cache();
    const ContextCache& c = cache != nullptr ? *cache : empty;
    ParamBinding b(false);
    const ForwardContext ctx{b};
    const Encoded e = m.encode(ctx, src, c);
    const Decoded d = m.decode(ctx, tgt_in, e, c);
    return {e.states.value(), d.states.value(), d.alignment.value(), m.classify(ctx, d.final).value()};
}

}  // namespace

TEST(PositionalEncoding, KnownValues) {
    const Tensor pe = positional_encoding(4, 6);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pe[i], i % 2 == 0 ? 0.0 : 1.0);
    EXPECT_NEAR(pe.at({1, 0}), 0.8414709848078965, 1e-15);
    for (double v : pe.data()) {
        EXPECT_LE(v, 1.0);
        EXPECT_GE(v, -1.0);
    }
    EXPECT_THROW(positional_encoding(4, 5), ConfigError);
}

TEST(Attention, SingleKeyReducesToValuePath) {
    Rng rng(1);
    ParameterSet params;
    const AttentionParams a = make_attention(params, "a", 8, 2, rng);
    ParamBinding b(false);
    const ForwardContext ctx{b};
    const Var kv = Var::constant(random_tensor({1, 8}, rng));
    const AttentionOutput out = multi_head_attention(ctx, a, Var::constant(random_tensor({3, 8}, rng)), kv, kv,
                                                     nullptr, "t");
    for (double w : out.weights.value().data()) EXPECT_EQ(w, 1.0);
    const Tensor want = apply(ctx, a.output, apply(ctx, a.value, kv)).value();
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out.output.value()[t * 8 + i], want[i], 1e-12);
}

TEST(Attention, ScoresAreScaledByHeadWidth) {
    // identity projections so the oracle is softmax(q.k / sqrt(d/h))
    ParameterSet params;
    Rng rng(2);
    AttentionParams a = make_attention(params, "a", 4, 1, rng);
    for (Linear* l : {&a.query, &a.key, &a.value, &a.output}) {
        l->weight->value = Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
        l->bias->value.fill(0.0);
    }
    ParamBinding b(false);
    const ForwardContext ctx{b};
    const Var q = Var::constant(Tensor::matrix({{1, 0, 0, 0}}));
    const Var k = Var::constant(Tensor::matrix({{2, 0, 0, 0}, {0, 0, 0, 0}}));
    const Tensor w = multi_head_attention(ctx, a, q, k, k, nullptr, "t").weights.value();
    // scores (1, 0): softmax = (e/(e+1), 1/(e+1))
    EXPECT_NEAR(w[0], 0.7310585786300049, 1e-15);
    const Var k2 = Var::constant(Tensor::matrix({{4, 0, 0, 0}, {0, 0, 0, 0}}));
    EXPECT_NEAR(multi_head_attention(ctx, a, q, k2, k2, nullptr, "t").weights.value()[0], 0.8807970779778823, 1e-15);
}

TEST(Attention, FullyMaskedRowIsAnError) {
    Rng rng(3);
    ParameterSet params;
    const AttentionParams a = make_attention(params, "a", 8, 2, rng);
    ParamBinding b(false);
    const ForwardContext ctx{b};
    const Var kv = Var::constant(random_tensor({2, 8}, rng));
    const Tensor none({2}, 0.0);
    EXPECT_THROW(multi_head_attention(ctx, a, kv, kv, kv, &none, "t"), NumericError);
}

TEST(Model, ShapesFollowInputs) {
    const ModelConfig c = tiny_config(HanMode::none);
    Model m(c, 1);
    const ForwardRun r = forward(m, {4, 5, 6, kEosId}, {kBosId, 7, 8});
    EXPECT_EQ(r.enc.shape(), (Shape{4, 8}));
    EXPECT_EQ(r.dec.shape(), (Shape{3, 8}));
    EXPECT_EQ(r.align.shape(), (Shape{3, 8}));
    EXPECT_EQ(r.logits.shape(), (Shape{3, 12}));
}

TEST(Model, DecoderIsCausal) {
    const ModelConfig c = tiny_config(HanMode::joint);
    Model m(c, 2);
    const std::vector<int> src{4, 5, 6, kEosId};
    const ForwardRun base = forward(m, src, {kBosId, 7, 8, 9, 10});
    for (std::size_t t = 1; t < 5; ++t) {
        std::vector<int> changed{kBosId, 7, 8, 9, 10};
        changed[t] = 11;
        const ForwardRun r = forward(m, src, changed);
        for (std::size_t row = 0; row < t; ++row) {
            for (std::size_t v = 0; v < 12; ++v) EXPECT_EQ(r.logits[row * 12 + v], base.logits[row * 12 + v]);
        }
        EXPECT_GT(max_abs_diff(r.logits.rows(t, t + 1), base.logits.rows(t, t + 1)), 0.0);
    }
}

TEST(Model, EncoderIsPositionSensitiveAndDeterministic) {
    Model m(tiny_config(HanMode::none), 3);
    const ForwardRun a = forward(m, {4, 5, 6, kEosId}, {kBosId});
    const ForwardRun b = forward(m, {5, 4, 6, kEosId}, {kBosId});
    EXPECT_GT(max_abs_diff(a.enc, b.enc), 1e-6);
    EXPECT_EQ(forward(m, {4, 5, 6, kEosId}, {kBosId}).logits, a.logits);
}

TEST(Model, ZeroOutputProjectionGivesFlatLogits) {
    Model m(tiny_config(HanMode::none), 4);
    for (auto& p : m.parameters()) {
        if (p->name.rfind("dec.output.", 0) == 0) p->value.fill(0.0);
    }
    const ForwardRun r = forward(m, {4, 5, kEosId}, {kBosId, 6});
    for (double v : r.logits.data()) EXPECT_EQ(v, r.logits[0]);
}

TEST(Model, BaselineIgnoresContextCache) {
    const ModelConfig c = tiny_config(HanMode::none);
    Model m(c, 5);
    ContextCache cache = m.make_cache();
    const ForwardRun clean = forward(m, {4, 5, kEosId}, {kBosId, 6});
    Rng rng(6);
    for (int i = 0; i < 3; ++i) cache.push({random_tensor({2, 8}, rng), Tensor({2}, 1.0), {4, 3}});
    EXPECT_EQ(forward(m, {4, 5, kEosId}, {kBosId, 6}, &cache).logits, clean.logits);
}

TEST(Model, OverlongInputIsTruncated) {
    ModelConfig c = tiny_config(HanMode::none);
    c.max_len = 5;
    Model m(c, 7);
    const ForwardRun r = forward(m, {4, 5, 6, 7, 8, 9, 10, kEosId}, {kBosId, 4, 5, 6, 7, 8, 9});
    EXPECT_EQ(r.enc.dim(0), 5u);
    EXPECT_EQ(r.logits.dim(0), 5u);
    EXPECT_EQ(truncate_tokens(std::vector<int>{1, 2, 3}, 2, "test"), (std::vector<int>{1, 2}));
}

TEST(Model, NoneModeHasNoHanParameters) {
    Model none(tiny_config(HanMode::none), 8);
    EXPECT_TRUE(none.han_parameters().empty());
    for (HanMode mode : {HanMode::encoder, HanMode::decoder, HanMode::decoder_source, HanMode::decoder_alignment}) {
        Model m(tiny_config(mode), 8);
        EXPECT_FALSE(m.han_parameters().empty()) << to_string(mode);
    }
    Model joint(tiny_config(HanMode::joint), 8);
    Model enc(tiny_config(HanMode::encoder), 8);
    EXPECT_EQ(joint.han_parameters().size(), 2 * enc.han_parameters().size());
}

TEST(Model, SameSeedGivesSameTransformerInEveryMode) {
    Model none(tiny_config(HanMode::none), 9);
    Model joint(tiny_config(HanMode::joint), 9);
    for (const auto& p : none.parameters()) EXPECT_EQ(joint.parameters().at(p->name).value, p->value) << p->name;
}

TEST(Model, ParametersAreFloatRepresentable) {
    Model m(tiny_config(HanMode::joint), 10);
    for (const auto& p : m.parameters()) {
        for (double v : p->value.data()) ASSERT_EQ(static_cast<double>(static_cast<float>(v)), v) << p->name;
    }
}

TEST(ModelConfig, RejectsBrokenInvariants) {
    ModelConfig c = tiny_config(HanMode::joint);
    c.n_heads = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config(HanMode::joint);
    c.han_heads = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config(HanMode::joint);
    c.vocab_src = 2;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(parse_han_mode("both"), ConfigError);
}

TEST(ModelConfig, KeyValueRoundTrip) {
    ModelConfig c = tiny_config(HanMode::decoder_alignment);
    c.han_residual = true;
    c.han_heads = 4;
    const ModelConfig back = ModelConfig::from_key_values(c.to_key_values());
    EXPECT_EQ(back.to_key_values(), c.to_key_values());
    EXPECT_TRUE(back.transformer_compatible(c));
    ModelConfig other = c;
    other.d_ff = 20;
    EXPECT_FALSE(other.transformer_compatible(c));
    const KeyValues kv = parse_key_values("# comment\nd_model = 16\n\nhan_mode=joint\n");
    EXPECT_EQ(kv.at("d_model"), "16");
    EXPECT_THROW(parse_key_values("no equals sign"), ConfigError);
    EXPECT_THROW(parse_size("d_model", "-3"), ConfigError);
}
