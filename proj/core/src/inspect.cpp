#include "hanmt/inspect.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace hanmt {
namespace {

using json = nlohmann::ordered_json;

constexpr const char* kShades[] = {" ", "░", "▒", "▓", "█"};

bool source_side_site(std::string_view site) {
    const HanSite s = parse_han_site(site);
    return s == HanSite::encoder || s == HanSite::decoder_source;
}

std::vector<std::vector<double>> head_rows(const Tensor& t) {
    if (t.rank() != 2) throw DimensionError(fmt::format("trace weights must be [heads, n], got {}", shape_str(t.shape())));
    std::vector<std::vector<double>> out(t.dim(0));
    for (std::size_t h = 0; h < t.dim(0); ++h) out[h].assign(t.ptr() + h * t.dim(1), t.ptr() + (h + 1) * t.dim(1));
    return out;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string record_label(std::size_t index, const TraceRecord& r) {
    return fmt::format("trace record {} ({} sentence {} position {} site {})", index + 1, r.doc, r.sentence, r.position,
                       r.site);
}

// Sentence tokens plus the closing eos, as the model saw them.
std::vector<std::string> with_eos(const Sentence& s) {
    std::vector<std::string> out(s.begin(), s.end());
    out.emplace_back("</s>");
    return out;
}

struct Resolved {
    const TraceRecord* record;
    std::string query;
};

std::vector<Resolved> resolve(const std::vector<TraceRecord>& records, const ReportCorpus& corpus,
                              const ReportOptions& options) {
    std::vector<Resolved> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const TraceRecord& r = records[i];
        if (options.doc && r.doc != *options.doc) continue;
        if (options.sentence && r.sentence != *options.sentence) continue;
        if (options.position && r.position != *options.position) continue;
        if (options.site && r.site != *options.site) continue;

        auto fail = [&](const std::string& why) { throw FormatError(fmt::format("{}: {}", record_label(i, r), why)); };
        bool source_site = false;
        try {
            source_site = source_side_site(r.site);
        } catch (const std::exception&) {
            fail("unknown site");
        }
        const SideDocuments& side = source_site ? corpus.source : corpus.target;
        std::size_t doc_index = 0;
        if (!r.doc.starts_with("doc") ||
            std::from_chars(r.doc.data() + 3, r.doc.data() + r.doc.size(), doc_index).ec != std::errc() ||
            doc_index >= side.size()) {
            fail("document not in the corpus");
        }
        const auto& doc = side[doc_index];
        if (r.sentence >= doc.size()) fail(fmt::format("document has only {} sentences", doc.size()));
        const auto query_tokens = with_eos(doc[r.sentence]);
        if (r.position >= query_tokens.size()) {
            fail(fmt::format("sentence has only {} positions", query_tokens.size()));
        }
        const std::size_t heads = r.sentence_weights.size();
        if (heads == 0) fail("no sentence weights");
        for (const auto& row : r.sentence_weights) {
            if (row.size() != r.context.size()) fail("sentence weights do not match the context count");
        }
        for (const auto& c : r.context) {
            if (c.sentence >= r.sentence) fail(fmt::format("context sentence {} is not earlier", c.sentence));
            // source context ends with eos, target context starts with bos: one extra token either way
            const std::size_t expected = doc[c.sentence].size() + 1;
            if (c.tokens.size() != expected) {
                fail(fmt::format("context sentence {} has {} tokens, corpus has {}", c.sentence, c.tokens.size(),
                                 expected));
            }
            if (c.word_weights.size() != heads) fail("word weights do not match the head count");
            for (const auto& row : c.word_weights) {
                if (row.size() != c.tokens.size()) fail("word weights do not match the context tokens");
            }
        }
        out.push_back({&r, query_tokens[r.position]});
    }
    return out;
}

std::string render_text(const std::vector<Resolved>& items, bool per_head) {
    std::string out;
    for (const auto& [r, query] : items) {
        out += fmt::format("== {} sentence {} position {} [{}] query \"{}\"\n", r->doc, r->sentence, r->position,
                           r->site, query);
        const std::size_t heads = r->sentence_weights.size();
        const std::size_t views = per_head ? heads : 1;
        for (std::size_t v = 0; v < views; ++v) {
            if (per_head) out += fmt::format("  head {}\n", v);
            const std::vector<double> sw = per_head ? r->sentence_weights[v] : head_average(r->sentence_weights);
            for (std::size_t j = r->context.size(); j-- > 0;) {
                const auto& c = r->context[j];
                const std::vector<double> ww = per_head ? c.word_weights[v] : head_average(c.word_weights);
                out += fmt::format("  sentence {:>3} {}{}{} {:.3f} |", c.sentence, kShades[shade_bucket(sw[j])],
                                   kShades[shade_bucket(sw[j])], kShades[shade_bucket(sw[j])], sw[j]);
                for (std::size_t w = 0; w < c.tokens.size(); ++w) {
                    out += fmt::format(" {}{}", c.tokens[w], kShades[shade_bucket(ww[w])]);
                }
                out += '\n';
            }
        }
    }
    return out;
}

std::string render_svg(const std::vector<Resolved>& items, bool per_head) {
    constexpr double kChar = 8.0;
    constexpr double kRow = 20.0;
    std::string body;
    double y = 20.0;
    double width = 400.0;
    for (const auto& [r, query] : items) {
        body += fmt::format("<text x=\"10\" y=\"{:.0f}\" font-weight=\"bold\">{} sentence {} position {} [{}] query "
                            "&quot;{}&quot;</text>\n",
                            y, xml_escape(r->doc), r->sentence, r->position, xml_escape(r->site), xml_escape(query));
        y += kRow;
        const std::size_t views = per_head ? r->sentence_weights.size() : 1;
        for (std::size_t v = 0; v < views; ++v) {
            if (per_head) {
                body += fmt::format("<text x=\"20\" y=\"{:.0f}\">head {}</text>\n", y, v);
                y += kRow;
            }
            const std::vector<double> sw = per_head ? r->sentence_weights[v] : head_average(r->sentence_weights);
            for (std::size_t j = r->context.size(); j-- > 0;) {
                const auto& c = r->context[j];
                const std::vector<double> ww = per_head ? c.word_weights[v] : head_average(c.word_weights);
                body += fmt::format(
                    "<rect x=\"20\" y=\"{:.0f}\" width=\"90\" height=\"16\" fill=\"#c0392b\" fill-opacity=\"{:.4f}\"/>"
                    "<text x=\"24\" y=\"{:.0f}\">s{} {:.3f}</text>\n",
                    y - 13, sw[j], y, c.sentence, sw[j]);
                double x = 120.0;
                for (std::size_t w = 0; w < c.tokens.size(); ++w) {
                    const double wd = kChar * static_cast<double>(c.tokens[w].size()) + 8.0;
                    body += fmt::format(
                        "<rect x=\"{:.0f}\" y=\"{:.0f}\" width=\"{:.0f}\" height=\"16\" fill=\"#2e86c1\" "
                        "fill-opacity=\"{:.4f}\"/><text x=\"{:.0f}\" y=\"{:.0f}\">{}</text>\n",
                        x, y - 13, wd, ww[w], x + 4, y, xml_escape(c.tokens[w]));
                    x += wd + 4.0;
                }
                width = std::max(width, x + 10.0);
                y += kRow;
            }
        }
        y += kRow / 2;
    }
    return fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"monospace\" "
        "font-size=\"12\">\n{}</svg>\n",
        width, y, body);
}

}  // namespace

int shade_bucket(double weight) {
    if (!(weight > 0.0)) return 0;
    return std::clamp(static_cast<int>(std::ceil(weight * 4.0 - 1e-12)), 1, 4);
}

std::vector<double> head_average(const std::vector<std::vector<double>>& per_head) {
    if (per_head.empty()) return {};
    std::vector<double> out(per_head.front().size(), 0.0);
    for (const auto& row : per_head) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += row[i];
    }
    for (double& v : out) v /= static_cast<double>(per_head.size());
    return out;
}

TraceRecord make_trace_record(const std::string& doc_id, const SentenceTrace& st, const Vocabulary& source,
                              const Vocabulary& target) {
    const AttentionTrace& t = st.trace;
    const bool src = t.site == HanSite::encoder || t.site == HanSite::decoder_source;
    const Vocabulary& vocab = src ? source : target;
    TraceRecord r;
    r.doc = doc_id;
    r.sentence = st.sentence;
    r.position = t.position;
    r.site = std::string(to_string(t.site));
    r.sentence_weights = head_rows(t.sentence_weights);
    const std::size_t k_eff = t.word_weights.size();
    for (std::size_t j = 0; j < k_eff; ++j) {
        TraceRecord::Context c;
        c.sentence = st.sentence - k_eff + j;
        for (int id : t.context_tokens[j]) c.tokens.push_back(vocab.token(id));
        c.word_weights = head_rows(t.word_weights[j]);
        r.context.push_back(std::move(c));
    }
    return r;
}

std::string trace_to_json(const TraceRecord& r) {
    json j;
    j["doc"] = r.doc;
    j["sentence"] = r.sentence;
    j["position"] = r.position;
    j["site"] = r.site;
    j["sentence_weights"] = r.sentence_weights;
    json ctx = json::array();
    for (const auto& c : r.context) {
        json e;
        e["sentence"] = c.sentence;
        e["tokens"] = c.tokens;
        e["word_weights"] = c.word_weights;
        ctx.push_back(std::move(e));
    }
    j["context"] = std::move(ctx);
    return j.dump();
}

TraceRecord trace_from_json(const std::string& line, std::size_t line_no) {
    try {
        const json j = json::parse(line);
        TraceRecord r;
        r.doc = j.at("doc").get<std::string>();
        r.sentence = j.at("sentence").get<std::size_t>();
        r.position = j.at("position").get<std::size_t>();
        r.site = j.at("site").get<std::string>();
        r.sentence_weights = j.at("sentence_weights").get<std::vector<std::vector<double>>>();
        for (const auto& e : j.at("context")) {
            TraceRecord::Context c;
            c.sentence = e.at("sentence").get<std::size_t>();
            c.tokens = e.at("tokens").get<std::vector<std::string>>();
            c.word_weights = e.at("word_weights").get<std::vector<std::vector<double>>>();
            r.context.push_back(std::move(c));
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("trace line {}: {}", line_no, e.what()));
    }
}

void write_traces(const std::string& path, const std::vector<TraceRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path));
    for (const auto& r : records) out << trace_to_json(r) << '\n';
}

std::vector<TraceRecord> read_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path));
    std::vector<TraceRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(trace_from_json(line, line_no));
    }
    return out;
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "text") return ReportFormat::text;
    if (text == "svg") return ReportFormat::svg;
    throw ConfigError(fmt::format("unknown report format '{}' (text or svg)", text));
}

std::string render_attention_report(const std::vector<TraceRecord>& records, const ReportCorpus& corpus,
                                    const ReportOptions& options) {
    const auto items = resolve(records, corpus, options);
    return options.format == ReportFormat::text ? render_text(items, options.per_head)
                                                : render_svg(items, options.per_head);
}

void render_attention_report(const std::string& trace_path, const ReportCorpus& corpus, const std::string& out_path,
                             const ReportOptions& options) {
    const std::string report = render_attention_report(read_traces(trace_path), corpus, options);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", out_path));
    out << report;
}

}  // namespace hanmt
