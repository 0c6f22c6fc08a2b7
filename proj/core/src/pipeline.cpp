#include "hanmt/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace hanmt {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

}  // namespace

std::string source_vocab_path(const std::string& checkpoint_path) { return checkpoint_path + ".src.vocab"; }
std::string target_vocab_path(const std::string& checkpoint_path) { return checkpoint_path + ".tgt.vocab"; }

CorpusTranslation translate_corpus(const Model& model, const SideDocuments& source, const Vocabulary& source_vocab,
                                   const Vocabulary& target_vocab, const TranslateOptions& options) {
    CorpusTranslation out;
    const std::size_t max_len = model.config().max_len;
    for (std::size_t d = 0; d < source.size(); ++d) {
        std::vector<std::vector<int>> ids;
        ids.reserve(source[d].size());
        for (const auto& s : source[d]) ids.push_back(encode_source(s, source_vocab, max_len));
        DocumentTranslation t = translate_document(model, ids, options);
        auto& sentences = out.sentences.emplace_back();
        for (const auto& s : t.sentences) sentences.push_back(target_vocab.decode(s));
        const std::string doc_id = fmt::format("doc{}", d);
        for (const auto& st : t.traces) out.traces.push_back(make_trace_record(doc_id, st, source_vocab, target_vocab));
    }
    return out;
}

ExperimentConfig default_experiment(std::uint64_t seed) {
    ExperimentConfig c;
    c.train_data.seed = seed;
    c.train_data.n_docs = 2000;
    c.train_data.doc_len = 4;
    c.train_data.m_alternatives = 4;
    c.train_data.max_distance = 3;
    c.test_data = c.train_data;
    c.test_data.seed = seed + 1000003;
    c.test_data.n_docs = 200;

    c.model.d_model = 32;
    c.model.n_heads = 4;
    c.model.n_layers_enc = 1;
    c.model.n_layers_dec = 1;
    c.model.d_ff = 64;
    c.model.dropout = 0.0;
    c.model.max_len = 32;
    c.model.k = 3;
    c.model.han_mode = HanMode::joint;

    c.stage1.seed = seed;
    c.stage1.warmup_steps = 100;
    c.stage1.max_steps = 300;
    c.stage1.max_tokens_per_step = 400;
    c.stage1.label_smoothing = 0.1;
    // the plain schedule peaks too high for Adam at d_model 32
    c.stage1.lr_scale = 0.5;
    c.stage2 = c.stage1;
    c.stage2.stage = 2;
    c.stage2.max_steps = 600;
    c.decode.beam_size = 1;
    return c;
}

ExperimentResult run_synthetic_experiment(const ExperimentConfig& config) {
    ExperimentResult result;
    const SyntheticCorpus train = gen_synthetic(config.train_data);
    const SyntheticCorpus test = gen_synthetic(config.test_data);
    const auto cap = std::numeric_limits<std::size_t>::max();
    const Vocabulary src_vocab = Vocabulary::build(train.documents, cap, Side::source);
    const Vocabulary tgt_vocab = Vocabulary::build(train.documents, cap, Side::target);

    ModelConfig model_config = config.model;
    model_config.vocab_src = src_vocab.size();
    model_config.vocab_tgt = tgt_vocab.size();
    const auto encoded = encode_corpus(train.documents, src_vocab, tgt_vocab, model_config.max_len);

    const std::filesystem::path dir = config.out_dir;
    TrainConfig stage1 = config.stage1;
    TrainConfig stage2 = config.stage2;
    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(dir);
        stage1.checkpoint_path = (dir / kStage1Checkpoint).string();
        stage2.checkpoint_path = (dir / kStage2Checkpoint).string();
        for (const auto& ckpt : {stage1.checkpoint_path, stage2.checkpoint_path}) {
            src_vocab.save(source_vocab_path(ckpt));
            tgt_vocab.save(target_vocab_path(ckpt));
        }
        write_side((dir / "test.src").string(), source_side(test.documents));
        write_side((dir / "test.ref").string(), target_side(test.documents));
        write_ground_truth((dir / "test.truth").string(), test.truth);
    }

    auto started = std::chrono::steady_clock::now();
    Stage1Output s1 = train_stage1(model_config, encoded, stage1);
    result.stage1_seconds = seconds_since(started);

    started = std::chrono::steady_clock::now();
    Checkpoint weights;
    if (!stage1.checkpoint_path.empty()) {
        weights = load_checkpoint(stage1.checkpoint_path);
    } else {
        weights.config = s1.model.config();
        for (const auto& p : s1.model.parameters()) weights.parameters.push_back({p->name, p->value});
    }
    Stage2Output s2 = train_stage2(weights, model_config, encoded, stage2);
    result.stage2_seconds = seconds_since(started);

    started = std::chrono::steady_clock::now();
    const SideDocuments test_source = source_side(test.documents);
    const SideDocuments test_reference = target_side(test.documents);
    const auto hyp1 = translate_corpus(s1.model, test_source, src_vocab, tgt_vocab, config.decode);
    const auto hyp2 = translate_corpus(s2.model, test_source, src_vocab, tgt_vocab, config.decode);
    result.decode_seconds = seconds_since(started);

    result.stage1_accuracy = ambiguity_accuracy(hyp1.sentences, test.truth);
    result.stage2_accuracy = ambiguity_accuracy(hyp2.sentences, test.truth);
    result.stage1_bleu = bleu(hyp1.sentences, test_reference);
    result.stage2_bleu = bleu(hyp2.sentences, test_reference);

    if (!config.out_dir.empty()) {
        write_side((dir / "stage1.hyp").string(), hyp1.sentences);
        write_side((dir / "stage2.hyp").string(), hyp2.sentences);
        for (const auto& [name, hyp] : {std::pair{"stage1", &hyp1}, std::pair{"stage2", &hyp2}}) {
            EvalInputs in;
            in.candidates = hyp->sentences;
            in.references = test_reference;
            in.truth = test.truth;
            write_text(dir / fmt::format("{}.report", name), format_report_records(evaluate(in)));
        }
    }
    spdlog::info("synthetic experiment: stage-1 accuracy {}/{}, stage-2 accuracy {}/{}",
                 result.stage1_accuracy.hits, result.stage1_accuracy.total, result.stage2_accuracy.hits,
                 result.stage2_accuracy.total);
    return result;
}

}  // namespace hanmt
