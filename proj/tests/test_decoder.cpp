#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "hanmt/decoder.hpp"
#include "hanmt/model.hpp"
#include "test_support.hpp"

using namespace hanmt;
using hanmt::testing::random_tensor;

namespace {

// Next-token logits of one sentence under a fixed cache, recomputed from scratch per prefix.
PrefixScorer sentence_scorer(const Model& model, const std::vector<int>& source, const ContextCache& cache,
                             bool mask_specials = false) {
    return [&model, source, &cache, mask_specials](const std::vector<std::vector<int>>& prefixes) {
        const std::size_t vocab = model.config().vocab_tgt;
        Tensor out({prefixes.size(), vocab});
        for (std::size_t i = 0; i < prefixes.size(); ++i) {
            ParamBinding b(false);
            const ForwardContext ctx{b};
            const Encoded enc = model.encode(ctx, source, cache);
            std::vector<int> in{kBosId};
            in.insert(in.end(), prefixes[i].begin(), prefixes[i].end());
            const Tensor logits = model.classify(ctx, model.decode(ctx, in, enc, cache).final).value();
            std::copy_n(logits.ptr() + (in.size() - 1) * vocab, vocab, out.ptr() + i * vocab);
            if (mask_specials) {
                out[i * vocab + kPadId] = -std::numeric_limits<double>::infinity();
                out[i * vocab + kBosId] = -std::numeric_limits<double>::infinity();
            }
        }
        return out;
    };
}

double log_prob(const Tensor& row, std::size_t token) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row.data()) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : row.data()) z += std::exp(v - mx);
    return row[token] - mx - std::log(z);
}

// Every sequence that ends in eos or reaches max_len, scored independently.
Hypothesis exhaustive_best(const PrefixScorer& scorer, std::size_t vocab, std::size_t max_len, double penalty) {
    Hypothesis best;
    double best_key = -std::numeric_limits<double>::infinity();
    std::function<void(std::vector<int>&, double)> walk = [&](std::vector<int>& prefix, double score) {
        const Tensor logits = scorer({prefix});
        for (std::size_t v = 0; v < vocab; ++v) {
            prefix.push_back(static_cast<int>(v));
            const double s = score + log_prob(logits, v);
            if (static_cast<int>(v) == kEosId || prefix.size() == max_len) {
                const double key = s / std::pow(static_cast<double>(prefix.size()), penalty);
                if (key > best_key) {
                    best_key = key;
                    best = Hypothesis{prefix, s, true};
                }
            } else {
                walk(prefix, s);
            }
            prefix.pop_back();
        }
    };
    std::vector<int> empty;
    walk(empty, 0.0);
    return best;
}

ModelConfig enumerable_config(HanMode mode) {
    ModelConfig c = hanmt::testing::tiny_config(mode);
    c.vocab_tgt = 5;
    return c;
}

}  // namespace

TEST(BeamStep, KeepsBestByNormalizedScoreWithTieBreaks) {
    const std::vector<Hypothesis> alive{{{4}, -1.0, false}, {{5}, -1.0, false}};
    const Tensor logits({2, 5}, 0.0);  // every continuation ties
    const auto out = beam_step(alive, logits, 3, 0.6);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].tokens, (std::vector<int>{4, 0}));
    EXPECT_EQ(out[1].tokens, (std::vector<int>{4, 1}));
    EXPECT_EQ(out[2].tokens, (std::vector<int>{4, 2}));
    EXPECT_NEAR(out[0].score, -1.0 - std::log(5.0), 1e-12);
}

TEST(BeamStep, EosFinishesAndFinishedHypothesesAreCarried) {
    Tensor logits({2, 5}, 0.0);
    logits[kEosId] = 10.0;
    const std::vector<Hypothesis> alive{{{4}, -0.5, false}, {{4, 3}, -0.1, true}};
    const auto out = beam_step(alive, logits, 2, 0.0);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], alive[1]);  // carried, never extended
    EXPECT_TRUE(out[1].finished);
    EXPECT_EQ(out[1].tokens.back(), kEosId);
    EXPECT_THROW(beam_step(alive, Tensor({1, 5}), 2, 0.0), DimensionError);
    EXPECT_THROW(beam_step(alive, logits, 0, 0.0), ConfigError);
}

TEST(NormalizedScore, PenaltyZeroIsRawLogProbability) {
    const Hypothesis h{{4, 5, 3}, -2.4, true};
    EXPECT_EQ(normalized_score(h, 0.0), -2.4);
    EXPECT_NEAR(normalized_score(h, 1.0), -0.8, 1e-15);
    EXPECT_NEAR(normalized_score(h, 0.6), -2.4 / std::pow(3.0, 0.6), 1e-15);
}

TEST(BeamSearch, SaturatingBeamFindsExhaustiveOptimum) {
    Rng rng(1);
    std::size_t with_eos = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Model model(enumerable_config(HanMode::none), 100 + trial);
        // sharpen the output layer so optima differ from one model to the next
        for (auto& p : model.parameters()) {
            if (p->name.rfind("dec.output", 0) == 0) p->value = random_tensor(p->value.shape(), rng, 3.0);
        }
        const ContextCache cache = model.make_cache();
        const std::vector<int> source = hanmt::testing::random_ids(3, 11, rng);
        const PrefixScorer scorer = sentence_scorer(model, source, cache);
        for (double penalty : {0.0, 0.6}) {
            const Hypothesis want = exhaustive_best(scorer, 5, 4, penalty);
            const Hypothesis got = beam_search(scorer, BeamConfig{625, penalty, 4});
            EXPECT_EQ(got.tokens, want.tokens) << "trial " << trial << " penalty " << penalty;
            EXPECT_NEAR(got.score, want.score, 1e-12);
            with_eos += want.tokens.back() == kEosId;
        }
    }
    EXPECT_GT(with_eos, 0u);
}

TEST(BeamSearch, BeamOneIsGreedy) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Model model(hanmt::testing::tiny_config(HanMode::none), 200 + trial);
        const ContextCache cache = model.make_cache();
        const PrefixScorer scorer = sentence_scorer(model, hanmt::testing::random_ids(4, 11, rng), cache);
        const Hypothesis beam = beam_search(scorer, BeamConfig{1, 0.6, 6});
        const Hypothesis greedy = greedy_search(scorer, 6);
        EXPECT_EQ(beam.tokens, greedy.tokens);
        EXPECT_NEAR(beam.score, greedy.score, 1e-12);
    }
}

TEST(BeamSearch, StopsOnceNothingCanOvertake) {
    std::size_t calls = 0;
    // eos is overwhelmingly likely right away
    const PrefixScorer scorer = [&](const std::vector<std::vector<int>>& prefixes) {
        ++calls;
        Tensor t({prefixes.size(), 5}, 0.0);
        for (std::size_t i = 0; i < prefixes.size(); ++i) t[i * 5 + kEosId] = 50.0;
        return t;
    };
    const Hypothesis h = beam_search(scorer, BeamConfig{3, 0.6, 20});
    EXPECT_EQ(h.tokens, std::vector<int>{kEosId});
    EXPECT_EQ(calls, 1u);
    EXPECT_THROW(beam_search(scorer, BeamConfig{0, 0.6, 3}), ConfigError);
    EXPECT_THROW(beam_search(scorer, BeamConfig{1, -1.0, 3}), ConfigError);
}

TEST(MaxTargetLength, FactorFloorAndCap) {
    const TranslateOptions o;
    EXPECT_EQ(max_target_length(2, o, 31), 5u);
    EXPECT_EQ(max_target_length(10, o, 31), 15u);
    EXPECT_EQ(max_target_length(7, o, 31), 11u);
    EXPECT_EQ(max_target_length(40, o, 31), 31u);
}

TEST(TranslateDocument, CacheHoldsForcedDecodeOfChosenOutput) {
    Rng rng(3);
    const ModelConfig c = hanmt::testing::tiny_config(HanMode::joint);
    Model model(c, 4);
    for (Parameter* p : model.han_parameters()) {
        if (p->name.find("gate") != std::string::npos) p->value = random_tensor(p->value.shape(), rng, 1.0);
    }
    std::vector<std::vector<int>> sources;
    for (int i = 0; i < 4; ++i) {
        auto s = hanmt::testing::random_ids(3 + i % 2, 11, rng);
        s.push_back(kEosId);
        sources.push_back(s);
    }
    TranslateOptions opts;
    opts.beam_size = 3;
    const DocumentTranslation got = translate_document(model, sources, opts);
    ASSERT_EQ(got.sentences.size(), 4u);

    ContextCache cache = model.make_cache();
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const std::size_t limit = max_target_length(sources[i].size() - 1, opts, c.max_len - 1);
        Hypothesis best = beam_search(sentence_scorer(model, sources[i], cache, true), BeamConfig{3, 0.6, limit});
        if (best.tokens.back() == kEosId) best.tokens.pop_back();
        EXPECT_EQ(got.sentences[i], best.tokens) << "sentence " << i;
        ParamBinding b(false);
        const ForwardContext ctx{b};
        const Encoded enc = model.encode(ctx, sources[i], cache);
        std::vector<int> in{kBosId};
        in.insert(in.end(), best.tokens.begin(), best.tokens.end());
        model.push_context(cache, enc, model.decode(ctx, in, enc, cache));
    }
}

TEST(TranslateDocument, ContextFreeModelIgnoresSentenceOrder) {
    Rng rng(5);
    Model model(hanmt::testing::tiny_config(HanMode::none), 6);
    std::vector<std::vector<int>> sources;
    for (int i = 0; i < 5; ++i) {
        auto s = hanmt::testing::random_ids(2 + i, 11, rng);
        s.push_back(kEosId);
        sources.push_back(s);
    }
    const DocumentTranslation forward = translate_document(model, sources, {});
    std::vector<std::vector<int>> reversed(sources.rbegin(), sources.rend());
    const DocumentTranslation backward = translate_document(model, reversed, {});
    for (std::size_t i = 0; i < sources.size(); ++i) {
        EXPECT_EQ(forward.sentences[i], backward.sentences[sources.size() - 1 - i]);
    }
}

TEST(TranslateDocument, FirstSentenceMatchesBaselineAndTracesAreRecorded) {
    Rng rng(7);
    const ModelConfig c = hanmt::testing::tiny_config(HanMode::joint);
    ModelConfig none = c;
    none.han_mode = HanMode::none;
    Model joint(c, 8);
    Model base(none, 8);
    std::vector<std::vector<int>> sources;
    for (int i = 0; i < 3; ++i) {
        auto s = hanmt::testing::random_ids(4, 11, rng);
        s.push_back(kEosId);
        sources.push_back(s);
    }
    TranslateOptions opts;
    opts.collect_traces = true;
    const DocumentTranslation j = translate_document(joint, sources, opts);
    const DocumentTranslation b = translate_document(base, sources, opts);
    EXPECT_EQ(j.sentences[0], b.sentences[0]);
    EXPECT_TRUE(b.traces.empty());
    ASSERT_FALSE(j.traces.empty());
    for (const SentenceTrace& t : j.traces) {
        EXPECT_GE(t.sentence, 1u);
        EXPECT_EQ(t.trace.sentence_weights.dim(1), std::min<std::size_t>(t.sentence, c.k));
    }
}
