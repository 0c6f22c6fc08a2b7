#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hanmt/corpus.hpp"
#include "hanmt/decoder.hpp"

namespace hanmt {

/// One HAN prediction step as written to a trace file (docs/trace-format.md).
struct TraceRecord {
    struct Context {
        std::size_t sentence = 0;  // absolute index in the document
        std::vector<std::string> tokens;
        std::vector<std::vector<double>> word_weights;  // [head][token]
        friend bool operator==(const Context&, const Context&) = default;
    };
    std::string doc;
    std::size_t sentence = 0;
    std::size_t position = 0;
    std::string site;
    std::vector<std::vector<double>> sentence_weights;  // [head][context sentence]
    std::vector<Context> context;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// Converts an in-memory trace; source-side sites use `source` for surface
/// forms, target-side sites use `target`.
TraceRecord make_trace_record(const std::string& doc_id, const SentenceTrace& trace, const Vocabulary& source,
                              const Vocabulary& target);

std::string trace_to_json(const TraceRecord& record);
/// FormatError naming the line on malformed input.
TraceRecord trace_from_json(const std::string& line, std::size_t line_no = 0);
void write_traces(const std::string& path, const std::vector<TraceRecord>& records);
std::vector<TraceRecord> read_traces(const std::string& path);

enum class ReportFormat { text, svg };
ReportFormat parse_report_format(std::string_view text);

struct ReportOptions {
    ReportFormat format = ReportFormat::text;
    bool per_head = false;
    std::optional<std::string> doc;
    std::optional<std::size_t> sentence;
    std::optional<std::size_t> position;
    std::optional<std::string> site;
};

/// The sentences the traces refer to: the source documents and the emitted
/// translations, both in corpus order ("doc<i>" is document i).
struct ReportCorpus {
    SideDocuments source;
    SideDocuments target;
};

/// Text uses shading characters " ░▒▓█" for weights in (0,.25], (.25,.5],
/// (.5,.75], (.75,1]; SVG uses fill opacity. Weights are averaged over heads
/// unless `per_head` is set. FormatError names the first record that does not
/// fit the corpus.
std::string render_attention_report(const std::vector<TraceRecord>& records, const ReportCorpus& corpus,
                                    const ReportOptions& options);
void render_attention_report(const std::string& trace_path, const ReportCorpus& corpus, const std::string& out_path,
                             const ReportOptions& options);

/// Index 0..4 into the shading characters.
int shade_bucket(double weight);
/// Mean over heads of a [head][i] table.
std::vector<double> head_average(const std::vector<std::vector<double>>& per_head);

}  // namespace hanmt
