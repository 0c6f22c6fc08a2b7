#include <gtest/gtest.h>

#include "hanmt/decoder.hpp"
#include "hanmt/inspect.hpp"
#include "test_support.hpp"

using namespace hanmt;

namespace {

TraceRecord sample_record() {
    TraceRecord r;
    r.doc = "doc0";
    r.sentence = 2;
    r.position = 1;
    r.site = "enc";
    r.sentence_weights = {{0.25, 0.75}, {0.75, 0.25}};
    r.context = {{0, {"a", "b", "</s>"}, {{0.5, 0.5, 0.0}, {1.0, 0.0, 0.0}}},
                 {1, {"c", "</s>"}, {{0.2, 0.8}, {0.6, 0.4}}}};
    return r;
}

ReportCorpus sample_corpus() {
    ReportCorpus c;
    c.source = {{tokenize("a b"), tokenize("c"), tokenize("d e f")}};
    c.target = {{tokenize("x y"), tokenize("z"), tokenize("u v w")}};
    return c;
}

}  // namespace

TEST(ShadeBucket, QuarterBoundaries) {
    EXPECT_EQ(shade_bucket(0.0), 0);
    EXPECT_EQ(shade_bucket(0.01), 1);
    EXPECT_EQ(shade_bucket(0.25), 1);
    EXPECT_EQ(shade_bucket(0.26), 2);
    EXPECT_EQ(shade_bucket(0.5), 2);
    EXPECT_EQ(shade_bucket(0.75), 3);
    EXPECT_EQ(shade_bucket(1.0), 4);
}

TEST(HeadAverage, PreservesSimplex) {
    const auto avg = head_average({{0.25, 0.75}, {0.75, 0.25}, {1.0, 0.0}});
    EXPECT_NEAR(avg[0] + avg[1], 1.0, 1e-15);
    EXPECT_NEAR(avg[0], 2.0 / 3.0, 1e-15);
}

TEST(TraceFormat, JsonRoundTrip) {
    const TraceRecord r = sample_record();
    const std::string line = trace_to_json(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(line.rfind("{\"doc\":\"doc0\",\"sentence\":2,\"position\":1,\"site\":\"enc\",\"sentence_weights\":", 0),
              0u)
        << line;
    EXPECT_EQ(trace_from_json(line), r);
    const std::string path = hanmt::testing::temp_path("traces.jsonl");
    write_traces(path, {r, r});
    EXPECT_EQ(read_traces(path).size(), 2u);
    EXPECT_THROW(trace_from_json("{\"doc\":1}", 7), FormatError);
}

TEST(AttentionReport, TextShowsContextAndShading) {
    const std::string out = render_attention_report({sample_record()}, sample_corpus(), {});
    EXPECT_NE(out.find("doc0 sentence 2 position 1 [enc] query \"e\""), std::string::npos) << out;
    EXPECT_NE(out.find("sentence   1 ▒▒▒ 0.500 | c▒ </s>▓"), std::string::npos) << out;
    EXPECT_NE(out.find("sentence   0 ▒▒▒ 0.500 | a▓ b░ </s> "), std::string::npos) << out;
    // most recent context sentence comes first
    EXPECT_LT(out.find("sentence   1"), out.find("sentence   0"));
}

TEST(AttentionReport, PerHeadAndSvg) {
    ReportOptions o;
    o.per_head = true;
    const std::string text = render_attention_report({sample_record()}, sample_corpus(), o);
    EXPECT_NE(text.find("head 1"), std::string::npos);
    EXPECT_NE(text.find("sentence   1 ░░░ 0.250"), std::string::npos) << text;
    o.format = ReportFormat::svg;
    const std::string svg = render_attention_report({sample_record()}, sample_corpus(), o);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("fill-opacity=\"0.7500\""), std::string::npos);
    EXPECT_THROW(parse_report_format("png"), ConfigError);
}

TEST(AttentionReport, SingleContextSentenceIsFullIntensity) {
    TraceRecord r = sample_record();
    r.sentence = 1;
    r.sentence_weights = {{1.0}, {1.0}};
    r.context.pop_back();
    const std::string out = render_attention_report({r}, sample_corpus(), {});
    EXPECT_NE(out.find("███ 1.000"), std::string::npos) << out;
}

TEST(AttentionReport, FiltersSelectRecords) {
    TraceRecord other = sample_record();
    other.position = 0;
    ReportOptions o;
    o.position = 0;
    const std::string out = render_attention_report({sample_record(), other}, sample_corpus(), o);
    EXPECT_NE(out.find("position 0"), std::string::npos);
    EXPECT_EQ(out.find("position 1"), std::string::npos);
}

TEST(AttentionReport, MismatchNamesTheRecord) {
    TraceRecord bad = sample_record();
    bad.context[1].tokens = {"c", "extra", "</s>"};
    bad.context[1].word_weights = {{0.2, 0.4, 0.4}, {0.6, 0.2, 0.2}};
    try {
        render_attention_report({sample_record(), bad}, sample_corpus(), {});
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("trace record 2 (doc0 sentence 2 position 1 site enc)"), std::string::npos)
            << e.what();
    }
    TraceRecord missing = sample_record();
    missing.doc = "doc9";
    EXPECT_THROW(render_attention_report({missing}, sample_corpus(), {}), FormatError);
}

TEST(AttentionReport, WorksOnRealTraces) {
    hanmt::Rng rng(3);
    std::vector<Document> docs(1);
    docs[0].id = "doc0";
    for (int i = 0; i < 3; ++i) docs[0].pairs.push_back({tokenize("s1 s2 s3"), tokenize("t1 t2")});
    Vocabulary src = Vocabulary::build(docs, 11, Side::source);
    Vocabulary tgt = Vocabulary::build(docs, 12, Side::target);
    ModelConfig c = hanmt::testing::tiny_config(HanMode::joint);
    c.vocab_src = src.size();
    c.vocab_tgt = tgt.size();
    Model model(c, 4);
    std::vector<std::vector<int>> sources;
    for (const auto& p : docs[0].pairs) sources.push_back(encode_source(p.source, src, c.max_len));
    TranslateOptions opts;
    opts.collect_traces = true;
    const DocumentTranslation t = translate_document(model, sources, opts);
    std::vector<TraceRecord> records;
    for (const SentenceTrace& st : t.traces) records.push_back(make_trace_record("doc0", st, src, tgt));
    ASSERT_FALSE(records.empty());
    ReportCorpus corpus{source_side(docs), {{}}};
    for (const auto& s : t.sentences) corpus.target[0].push_back(tgt.decode(s));
    for (const auto& r : records) {
        for (const auto& row : r.sentence_weights) {
            double sum = 0.0;
            for (double w : row) sum += w;
            EXPECT_NEAR(sum, 1.0, 1e-6);
        }
        if (r.site == "enc") EXPECT_EQ(r.context.back().tokens.back(), "</s>");
    }
    EXPECT_NO_THROW(render_attention_report(records, corpus, {}));
}
