#pragma once

#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hanmt/corpus.hpp"
#include "hanmt/model.hpp"
#include "hanmt/ops.hpp"

namespace hanmt::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = scale * (2.0 * uniform01(rng) - 1.0);
    return t;
}

inline std::vector<int> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
    std::vector<int> out(n);
    // skip the specials so sequences look like real words
    for (int& v : out) v = 4 + static_cast<int>(rng() % (vocab - 4));
    return out;
}

inline ModelConfig tiny_config(HanMode mode, std::size_t d = 8, std::size_t k = 2) {
    ModelConfig c;
    c.d_model = d;
    c.n_heads = 2;
    c.n_layers_enc = 1;
    c.n_layers_dec = 1;
    c.d_ff = 2 * d;
    c.dropout = 0.0;
    c.vocab_src = 11;
    c.vocab_tgt = 12;
    c.max_len = 16;
    c.k = k;
    c.han_mode = mode;
    return c;
}

/// A random document of `n` sentence pairs for a model with the given vocabularies.
inline EncodedDocument random_document(const ModelConfig& c, std::size_t n, Rng& rng, std::size_t min_len = 2,
                                       std::size_t max_len = 5) {
    EncodedDocument doc{"doc", {}};
    for (std::size_t i = 0; i < n; ++i) {
        EncodedPair p;
        const std::size_t ls = min_len + rng() % (max_len - min_len + 1);
        const std::size_t lt = min_len + rng() % (max_len - min_len + 1);
        p.source = random_ids(ls, c.vocab_src, rng);
        p.source.push_back(kEosId);
        auto t = random_ids(lt, c.vocab_tgt, rng);
        p.target_in.push_back(kBosId);
        p.target_in.insert(p.target_in.end(), t.begin(), t.end());
        p.target_out = t;
        p.target_out.push_back(kEosId);
        doc.pairs.push_back(std::move(p));
    }
    return doc;
}

inline std::string temp_path(const std::string& name) {
    return (std::string(::testing::TempDir()) + "hanmt_" + name);
}

}  // namespace hanmt::testing
