// hanmt command-line interface.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hanmt/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hanmt;

namespace {

constexpr int kUsageError = 2;

const std::set<std::string, std::less<>> kExtraConfigKeys = {"vocab_cap"};

struct FileConfig {
    ModelConfig model;
    TrainConfig train;
    std::size_t vocab_cap = 32000;
    KeyValues raw;
};

FileConfig read_config(const std::string& path) {
    FileConfig c;
    if (path.empty()) return c;
    c.raw = read_key_value_file(path);
    const KeyValues model_keys = ModelConfig{}.to_key_values();
    const KeyValues train_keys = TrainConfig{}.to_key_values();
    for (const auto& [k, v] : c.raw) {
        if (!model_keys.contains(k) && !train_keys.contains(k) && !kExtraConfigKeys.contains(k)) {
            throw ConfigError(fmt::format("{}: unknown key '{}'", path, k));
        }
    }
    c.model = ModelConfig::from_key_values(c.raw);
    c.train = TrainConfig::from_key_values(c.raw);
    if (auto it = c.raw.find("vocab_cap"); it != c.raw.end()) c.vocab_cap = parse_size("vocab_cap", it->second);
    return c;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path));
    out << text;
}

void save_vocabularies(const std::string& checkpoint, const Vocabulary& src, const Vocabulary& tgt) {
    src.save(source_vocab_path(checkpoint));
    tgt.save(target_vocab_path(checkpoint));
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string train_src, train_tgt, dev_src, dev_tgt;
    std::string out;
    std::string init;
    std::string log;
    int stage = 1;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
    FileConfig fc = read_config(a.config);
    TrainConfig tc = fc.train;
    tc.stage = a.stage;
    tc.checkpoint_path = a.out;
    tc.log_path = a.log;
    if (a.steps) tc.max_steps = *a.steps;
    if (a.seed) tc.seed = *a.seed;

    const auto docs = load_corpus(a.train_src, a.train_tgt);
    std::optional<std::vector<Document>> dev_docs;
    if (!a.dev_src.empty()) dev_docs = load_corpus(a.dev_src, a.dev_tgt);

    if (a.stage == 1) {
        const Vocabulary src = Vocabulary::build(docs, fc.vocab_cap, Side::source);
        const Vocabulary tgt = Vocabulary::build(docs, fc.vocab_cap, Side::target);
        ModelConfig mc = fc.model;
        mc.vocab_src = src.size();
        mc.vocab_tgt = tgt.size();
        if (mc.han_mode != HanMode::none) spdlog::info("stage 1 trains the context-free model; han_mode applies in stage 2");
        const auto train = encode_corpus(docs, src, tgt, mc.max_len);
        std::optional<std::vector<EncodedDocument>> dev;
        if (dev_docs) dev = encode_corpus(*dev_docs, src, tgt, mc.max_len);
        save_vocabularies(a.out, src, tgt);
        const auto out = train_stage1(mc, train, tc, dev ? &*dev : nullptr);
        fmt::print("stage 1 done: {} steps, final loss {:.4f} -> {}\n", out.result.log.size(), out.result.final_loss, a.out);
        return 0;
    }

    const Checkpoint init = load_checkpoint(a.init);
    const Vocabulary src = Vocabulary::load(source_vocab_path(a.init));
    const Vocabulary tgt = Vocabulary::load(target_vocab_path(a.init));
    // the transformer shape comes from the checkpoint; the config file picks the HAN setup
    ModelConfig target = ModelConfig::from_key_values(fc.raw, init.config);
    if (!fc.raw.contains("han_mode")) target.han_mode = HanMode::joint;
    const auto train = encode_corpus(docs, src, tgt, target.max_len);
    std::optional<std::vector<EncodedDocument>> dev;
    if (dev_docs) dev = encode_corpus(*dev_docs, src, tgt, target.max_len);
    save_vocabularies(a.out, src, tgt);
    const auto out = train_stage2(init, target, train, tc, dev ? &*dev : nullptr);
    fmt::print("stage 2 ({}) done: {} steps, final loss {:.4f} -> {}\n", to_string(target.han_mode),
               out.result.log.size(), out.result.final_loss, a.out);
    return 0;
}

// ---- translate -----------------------------------------------------------

struct TranslateArgs {
    std::string model, src, out, trace;
    TranslateOptions options;
};

int run_translate(TranslateArgs a) {
    const Checkpoint ckpt = load_checkpoint(a.model);
    const Model model = model_from_checkpoint(ckpt);
    const Vocabulary src = Vocabulary::load(source_vocab_path(a.model));
    const Vocabulary tgt = Vocabulary::load(target_vocab_path(a.model));
    a.options.collect_traces = !a.trace.empty();
    const CorpusTranslation t = translate_corpus(model, load_side(a.src), src, tgt, a.options);
    write_side(a.out, t.sentences);
    if (!a.trace.empty()) write_traces(a.trace, t.traces);
    std::size_t n = 0;
    for (const auto& d : t.sentences) n += d.size();
    fmt::print("translated {} documents, {} sentences -> {}\n", t.sentences.size(), n, a.out);
    return 0;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
    std::string hyp, ref, pronouns, nouns, stopwords, lexicon, embeddings, truth, out;
    std::size_t window = 3;
    std::string format = "text";
};

int run_evaluate(const EvaluateArgs& a) {
    EvalInputs in;
    in.candidates = load_side(a.hyp);
    in.references = load_side(a.ref);
    in.window = a.window;
    if (!a.pronouns.empty()) in.pronouns = load_word_list(a.pronouns);
    if (!a.nouns.empty()) in.nouns = load_word_list(a.nouns);
    if (!a.stopwords.empty()) in.stopwords = load_word_list(a.stopwords);
    if (!a.lexicon.empty()) in.lexicon = load_lexicon(a.lexicon);
    if (!a.embeddings.empty()) in.embeddings = load_embeddings(a.embeddings);
    if (!a.truth.empty()) in.truth = load_ground_truth(a.truth);
    if (in.lexicon && !in.stopwords) throw ConfigError("--lexicon needs --stopwords to define content words");
    const EvalReport report = evaluate(in);
    std::string text;
    if (a.format == "text" || a.format == "both") text += format_report_text(report);
    if (a.format == "both") text += '\n';
    if (a.format == "records" || a.format == "both") text += format_report_records(report);
    if (a.out.empty()) {
        fmt::print("{}", text);
    } else {
        write_file(a.out, text);
    }
    return 0;
}

// ---- gen-synthetic -------------------------------------------------------

int run_gen_synthetic(const SyntheticConfig& c, const std::string& prefix) {
    const SyntheticCorpus corpus = gen_synthetic(c);
    if (const fs::path parent = fs::path(prefix).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_side(prefix + ".src", source_side(corpus.documents));
    write_side(prefix + ".tgt", target_side(corpus.documents));
    write_ground_truth(prefix + ".truth", corpus.truth);
    fmt::print("wrote {} documents to {}.src/.tgt/.truth\n", corpus.documents.size(), prefix);
    return 0;
}

// ---- inspect -------------------------------------------------------------

struct InspectArgs {
    std::string trace, src, hyp, out;
    std::string format = "text";
    bool per_head = false;
    std::optional<std::string> doc, site;
    std::optional<std::size_t> sentence, position;
};

int run_inspect(const InspectArgs& a) {
    ReportOptions o;
    o.format = parse_report_format(a.format);
    o.per_head = a.per_head;
    o.doc = a.doc;
    o.site = a.site;
    o.sentence = a.sentence;
    o.position = a.position;
    if (o.site) (void)parse_han_site(*o.site);
    const ReportCorpus corpus{load_side(a.src), load_side(a.hyp)};
    render_attention_report(a.trace, corpus, a.out, o);
    fmt::print("attention report -> {}\n", a.out);
    return 0;
}

// ---- sweep-k -------------------------------------------------------------

struct SweepArgs {
    std::string config, train_src, train_tgt, test_src, test_ref, truth, out_dir;
    std::vector<std::size_t> ks{1, 3, 5, 7};
    std::size_t beam = 1;
};

int run_sweep(const SweepArgs& a) {
    FileConfig fc = read_config(a.config);
    fs::create_directories(a.out_dir);
    const auto docs = load_corpus(a.train_src, a.train_tgt);
    const Vocabulary src = Vocabulary::build(docs, fc.vocab_cap, Side::source);
    const Vocabulary tgt = Vocabulary::build(docs, fc.vocab_cap, Side::target);
    ModelConfig mc = fc.model;
    mc.vocab_src = src.size();
    mc.vocab_tgt = tgt.size();
    if (mc.han_mode == HanMode::none) mc.han_mode = HanMode::joint;
    const auto train = encode_corpus(docs, src, tgt, mc.max_len);
    const SideDocuments test_src = load_side(a.test_src);
    const SideDocuments test_ref = load_side(a.test_ref);
    std::optional<std::vector<GroundTruth>> truth;
    if (!a.truth.empty()) truth = load_ground_truth(a.truth);

    TrainConfig tc1 = fc.train;
    tc1.checkpoint_path = (fs::path(a.out_dir) / "stage1.ckpt").string();
    save_vocabularies(tc1.checkpoint_path, src, tgt);
    const Stage1Output s1 = train_stage1(mc, train, tc1);
    const Checkpoint s1_ckpt = load_checkpoint(tc1.checkpoint_path);

    TranslateOptions opts;
    opts.beam_size = a.beam;
    std::string table = fmt::format("{:>3}  {:>8}{}\n", "k", "BLEU", truth ? "  ambiguity_acc" : "");
    std::string tsv = truth ? "k\tbleu\tambiguity_acc\n" : "k\tbleu\n";
    for (std::size_t k : a.ks) {
        ModelConfig target = mc;
        target.k = k;
        TrainConfig tc2 = fc.train;
        tc2.checkpoint_path = (fs::path(a.out_dir) / fmt::format("stage2.k{}.ckpt", k)).string();
        save_vocabularies(tc2.checkpoint_path, src, tgt);
        const Stage2Output s2 = train_stage2(s1_ckpt, target, train, tc2);
        const CorpusTranslation hyp = translate_corpus(s2.model, test_src, src, tgt, opts);
        write_side((fs::path(a.out_dir) / fmt::format("test.k{}.hyp", k)).string(), hyp.sentences);
        const double b = bleu(hyp.sentences, test_ref).score;
        std::string acc;
        if (truth) {
            const auto r = ambiguity_accuracy(hyp.sentences, *truth).value();
            acc = r ? fmt::format("{:.4f}", *r) : "undefined";
        }
        table += fmt::format("{:>3}  {:>8.2f}{}\n", k, b, truth ? fmt::format("  {:>13}", acc) : "");
        tsv += truth ? fmt::format("{}\t{:.4f}\t{}\n", k, b, acc) : fmt::format("{}\t{:.4f}\n", k, b);
    }
    write_file((fs::path(a.out_dir) / "sweep-k.tsv").string(), tsv);
    fmt::print("{}", table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_st("hanmt"));
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"Document-level NMT with hierarchical context attention"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train stage 1 (context-free) or stage 2 (with HAN)");
    train_cmd->add_option("--config", train.config, "Key-value config (model and training keys)")->check(CLI::ExistingFile);
    train_cmd->add_option("--train-src", train.train_src)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--train-tgt", train.train_tgt)->required()->check(CLI::ExistingFile);
    auto* dev_src = train_cmd->add_option("--dev-src", train.dev_src, "Dev corpus for best-checkpoint selection")
                        ->check(CLI::ExistingFile);
    auto* dev_tgt = train_cmd->add_option("--dev-tgt", train.dev_tgt)->check(CLI::ExistingFile);
    dev_src->needs(dev_tgt);
    dev_tgt->needs(dev_src);
    train_cmd->add_option("--out", train.out, "Checkpoint to write")->required();
    train_cmd->add_option("--stage", train.stage)->check(CLI::IsMember({1, 2}));
    train_cmd->add_option("--init", train.init, "Stage-1 checkpoint (stage 2)")->check(CLI::ExistingFile);
    train_cmd->add_option("--log", train.log, "JSON-lines training log");
    train_cmd->add_option("--steps", train.steps, "Override max_steps");
    train_cmd->add_option("--seed", train.seed, "Override seed");

    TranslateArgs tr;
    auto* tr_cmd = app.add_subcommand("translate", "Translate documents sentence by sentence");
    tr_cmd->add_option("--model", tr.model)->required()->check(CLI::ExistingFile);
    tr_cmd->add_option("--src", tr.src)->required()->check(CLI::ExistingFile);
    tr_cmd->add_option("--out", tr.out)->required();
    tr_cmd->add_option("--beam", tr.options.beam_size)->check(CLI::PositiveNumber);
    tr_cmd->add_option("--length-penalty", tr.options.length_penalty)->check(CLI::NonNegativeNumber);
    tr_cmd->add_option("--max-len-factor", tr.options.max_len_factor)->check(CLI::PositiveNumber);
    tr_cmd->add_option("--trace", tr.trace, "Write HAN attention traces (JSON lines)");

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Score a translation against a reference");
    ev_cmd->add_option("--hyp", ev.hyp)->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--ref", ev.ref)->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--pronouns", ev.pronouns, "Word list for pronoun accuracy")->check(CLI::ExistingFile);
    ev_cmd->add_option("--nouns", ev.nouns, "Word list for noun accuracy")->check(CLI::ExistingFile);
    ev_cmd->add_option("--window", ev.window, "Position window for word matching");
    ev_cmd->add_option("--stopwords", ev.stopwords, "Enables lexical cohesion")->check(CLI::ExistingFile);
    ev_cmd->add_option("--lexicon", ev.lexicon, "Synonym pairs for cohesion")->check(CLI::ExistingFile);
    ev_cmd->add_option("--embeddings", ev.embeddings, "Enables coherence")->check(CLI::ExistingFile);
    ev_cmd->add_option("--truth", ev.truth, "Synthetic ground truth")->check(CLI::ExistingFile);
    ev_cmd->add_option("--format", ev.format)->check(CLI::IsMember({"text", "records", "both"}));
    ev_cmd->add_option("--out", ev.out, "Write the report here instead of stdout");

    SyntheticConfig syn;
    std::string syn_prefix;
    auto* syn_cmd = app.add_subcommand("gen-synthetic", "Write the synthetic context task");
    syn_cmd->add_option("--out-prefix", syn_prefix)->required();
    syn_cmd->add_option("--docs", syn.n_docs);
    syn_cmd->add_option("--doc-len", syn.doc_len);
    syn_cmd->add_option("--alternatives", syn.m_alternatives);
    syn_cmd->add_option("--filler", syn.filler_vocab);
    syn_cmd->add_option("--min-len", syn.min_sentence_len);
    syn_cmd->add_option("--max-len", syn.max_sentence_len);
    syn_cmd->add_option("--max-distance", syn.max_distance);
    syn_cmd->add_option("--seed", syn.seed);

    InspectArgs ins;
    auto* ins_cmd = app.add_subcommand("inspect", "Render HAN attention from a trace file");
    ins_cmd->add_option("--trace", ins.trace)->required()->check(CLI::ExistingFile);
    ins_cmd->add_option("--src", ins.src, "Source documents that were translated")->required()->check(CLI::ExistingFile);
    ins_cmd->add_option("--hyp", ins.hyp, "Translation produced with the trace")->required()->check(CLI::ExistingFile);
    ins_cmd->add_option("--out", ins.out)->required();
    ins_cmd->add_option("--format", ins.format)->check(CLI::IsMember({"text", "svg"}));
    ins_cmd->add_flag("--per-head", ins.per_head);
    ins_cmd->add_option("--doc", ins.doc);
    ins_cmd->add_option("--sentence", ins.sentence);
    ins_cmd->add_option("--position", ins.position);
    ins_cmd->add_option("--site", ins.site);

    SweepArgs sw;
    auto* sw_cmd = app.add_subcommand("sweep-k", "Train and score one stage-2 model per context size");
    sw_cmd->add_option("--config", sw.config)->check(CLI::ExistingFile);
    sw_cmd->add_option("--train-src", sw.train_src)->required()->check(CLI::ExistingFile);
    sw_cmd->add_option("--train-tgt", sw.train_tgt)->required()->check(CLI::ExistingFile);
    sw_cmd->add_option("--test-src", sw.test_src)->required()->check(CLI::ExistingFile);
    sw_cmd->add_option("--test-ref", sw.test_ref)->required()->check(CLI::ExistingFile);
    sw_cmd->add_option("--truth", sw.truth)->check(CLI::ExistingFile);
    sw_cmd->add_option("--out-dir", sw.out_dir)->required();
    sw_cmd->add_option("--ks", sw.ks)->delimiter(',');
    sw_cmd->add_option("--beam", sw.beam)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }
    if (verbose) spdlog::set_level(spdlog::level::debug);
    if (*train_cmd && train.stage == 2 && train.init.empty()) {
        std::cerr << "train: --stage 2 requires --init <stage-1 checkpoint>\n";
        return kUsageError;
    }

    try {
        if (*train_cmd) return run_train(train);
        if (*tr_cmd) return run_translate(tr);
        if (*ev_cmd) return run_evaluate(ev);
        if (*syn_cmd) return run_gen_synthetic(syn, syn_prefix);
        if (*ins_cmd) return run_inspect(ins);
        if (*sw_cmd) return run_sweep(sw);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
