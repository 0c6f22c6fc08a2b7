// Microbenchmarks for the hot paths: dense kernels, one training step and
// document-sequential decoding.

#include <benchmark/benchmark.h>

#include "hanmt/decoder.hpp"
#include "hanmt/model.hpp"
#include "hanmt/ops.hpp"

using namespace hanmt;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = 2.0 * uniform01(rng) - 1.0;
    return t;
}

ModelConfig bench_config(HanMode mode) {
    ModelConfig c;
    c.d_model = 32;
    c.n_heads = 4;
    c.n_layers_enc = 1;
    c.n_layers_dec = 1;
    c.d_ff = 64;
    c.dropout = 0.0;
    c.vocab_src = 64;
    c.vocab_tgt = 64;
    c.max_len = 32;
    c.k = 3;
    c.han_mode = mode;
    return c;
}

std::vector<int> random_sentence(std::size_t n, std::size_t vocab, Rng& rng) {
    std::vector<int> out(n);
    for (int& v : out) v = 4 + static_cast<int>(rng() % (vocab - 4));
    return out;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Var a = Var::constant(random_tensor({n, n}, rng));
    const Var b = Var::constant(random_tensor({n, n}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).value().ptr());
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

void BM_Softmax(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const Var x = Var::constant(random_tensor({4, n, n}, rng));
    for (auto _ : state) benchmark::DoNotOptimize(softmax(x, 2).value().ptr());
}
BENCHMARK(BM_Softmax)->Arg(8)->Arg(32)->Arg(64);

// forward and backward over one sentence pair with a full context cache
void BM_TrainStep(benchmark::State& state) {
    const auto mode = static_cast<HanMode>(state.range(0));
    const ModelConfig c = bench_config(mode);
    Model model(c, 3);
    Rng rng(4);
    ContextCache cache = model.make_cache();
    auto pair = [&] {
        std::vector<int> src = random_sentence(8, c.vocab_src, rng);
        src.push_back(kEosId);
        std::vector<int> tgt = random_sentence(8, c.vocab_tgt, rng);
        std::vector<int> in{kBosId};
        in.insert(in.end(), tgt.begin(), tgt.end());
        tgt.push_back(kEosId);
        return std::tuple{src, in, tgt};
    };
    for (std::size_t i = 0; i < c.k; ++i) {
        const auto [src, in, out] = pair();
        ParamBinding b(false);
        const ForwardContext ctx{b};
        const Encoded enc = model.encode(ctx, src, cache);
        model.push_context(cache, enc, model.decode(ctx, in, enc, cache));
    }
    const auto [src, in, out] = pair();
    for (auto _ : state) {
        ParamBinding b(true);
        const ForwardContext ctx{b};
        const Encoded enc = model.encode(ctx, src, cache);
        Var loss = cross_entropy_smoothed(model.classify(ctx, model.decode(ctx, in, enc, cache).final), out, 0.1,
                                          kPadId);
        loss.backward();
        b.accumulate_grads();
        model.parameters().zero_grad();
    }
    state.SetLabel(std::string(to_string(mode)));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(HanMode::none))
    ->Arg(static_cast<int>(HanMode::encoder))
    ->Arg(static_cast<int>(HanMode::joint))
    ->Unit(benchmark::kMillisecond);

void BM_TranslateDocument(benchmark::State& state) {
    const ModelConfig c = bench_config(HanMode::joint);
    Model model(c, 5);
    Rng rng(6);
    std::vector<std::vector<int>> doc;
    for (int i = 0; i < 4; ++i) {
        auto s = random_sentence(6, c.vocab_src, rng);
        s.push_back(kEosId);
        doc.push_back(s);
    }
    TranslateOptions opts;
    opts.beam_size = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(translate_document(model, doc, opts).sentences.size());
}
BENCHMARK(BM_TranslateDocument)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
