#include "hanmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "hanmt/config.hpp"
#include "hanmt/model.hpp"
#include "hanmt/ops.hpp"

namespace hanmt {
namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

const char* const kSpecialTokens[] = {"<pad>", "<unk>", "<s>", "</s>"};

}  // namespace

Sentence tokenize(std::string_view line) {
    Sentence out;
    constexpr std::string_view blank = " \t\r\n\v\f";
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && blank.find(line[i]) != std::string_view::npos) ++i;
        std::size_t j = i;
        while (j < line.size() && blank.find(line[j]) == std::string_view::npos) ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string detokenize(const Sentence& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::vector<Document> parse_corpus(const std::vector<std::string>& source_lines,
                                   const std::vector<std::string>& target_lines, std::string_view marker) {
    if (source_lines.size() != target_lines.size()) {
        throw FormatError(fmt::format("source has {} lines but target has {}", source_lines.size(), target_lines.size()));
    }
    std::vector<Document> docs;
    for (std::size_t i = 0; i < source_lines.size(); ++i) {
        const bool src_marker = source_lines[i] == marker;
        const bool tgt_marker = target_lines[i] == marker;
        if (src_marker != tgt_marker) {
            throw FormatError(fmt::format("document marker on line {} appears in the {} file only", i + 1,
                                          src_marker ? "source" : "target"));
        }
        if (src_marker || docs.empty()) {
            // a document with no sentences is dropped when the next one starts
            if (!docs.empty() && docs.back().pairs.empty()) docs.pop_back();
            docs.push_back(Document{fmt::format("doc{}", docs.size()), {}});
            if (src_marker) continue;
        }
        docs.back().pairs.push_back({tokenize(source_lines[i]), tokenize(target_lines[i])});
    }
    if (!docs.empty() && docs.back().pairs.empty()) docs.pop_back();
    for (std::size_t i = 0; i < docs.size(); ++i) docs[i].id = fmt::format("doc{}", i);
    return docs;
}

std::vector<Document> load_corpus(const std::string& source_path, const std::string& target_path,
                                  std::string_view marker) {
    return parse_corpus(read_lines(source_path), read_lines(target_path), marker);
}

SideDocuments source_side(const std::vector<Document>& docs) {
    SideDocuments out;
    for (const auto& d : docs) {
        auto& sents = out.emplace_back();
        for (const auto& p : d.pairs) sents.push_back(p.source);
    }
    return out;
}

SideDocuments target_side(const std::vector<Document>& docs) {
    SideDocuments out;
    for (const auto& d : docs) {
        auto& sents = out.emplace_back();
        for (const auto& p : d.pairs) sents.push_back(p.target);
    }
    return out;
}

SideDocuments load_side(const std::string& path, std::string_view marker) {
    SideDocuments docs;
    for (const std::string& line : read_lines(path)) {
        if (line == marker) {
            docs.emplace_back();
            continue;
        }
        if (docs.empty()) docs.emplace_back();
        docs.back().push_back(tokenize(line));
    }
    return docs;
}

std::string format_side(const SideDocuments& docs, std::string_view marker) {
    std::string out;
    for (const auto& doc : docs) {
        out += marker;
        out += '\n';
        for (const auto& s : doc) {
            out += detokenize(s);
            out += '\n';
        }
    }
    return out;
}

void write_side(const std::string& path, const SideDocuments& docs, std::string_view marker) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path));
    out << format_side(docs, marker);
}

Vocabulary::Vocabulary() {
    for (const char* s : kSpecialTokens) add(s);
}

void Vocabulary::add(std::string token) {
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<Document>& docs, std::size_t cap, Side side) {
    if (cap <= kSpecials) throw ConfigError(fmt::format("vocabulary cap {} leaves no room past the specials", cap));
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& d : docs) {
        for (const auto& p : d.pairs) {
            for (const auto& tok : side == Side::source ? p.source : p.target) {
                ++counts[tok];
                ++total;
            }
        }
    }
    if (total == 0) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // std::map iteration is lexicographic, so a stable sort keeps that order among ties
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary vocab;
    for (const auto& [tok, n] : ranked) {
        if (vocab.size() >= cap) break;
        if (vocab.contains(tok)) continue;  // a literal "<unk>" in the data
        vocab.add(tok);
    }
    return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.size() < kSpecials) throw FormatError(fmt::format("vocabulary '{}' is missing the special tokens", path));
    for (std::size_t i = 0; i < kSpecials; ++i) {
        if (lines[i] != kSpecialTokens[i]) {
            throw FormatError(fmt::format("vocabulary '{}' line {}: expected '{}'", path, i + 1, kSpecialTokens[i]));
        }
    }
    Vocabulary vocab;
    for (std::size_t i = kSpecials; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        if (vocab.contains(lines[i])) throw FormatError(fmt::format("vocabulary '{}' repeats '{}'", path, lines[i]));
        vocab.add(lines[i]);
    }
    return vocab;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path));
    for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range(fmt::format("token id {} outside vocabulary of {}", id, tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

std::vector<int> Vocabulary::encode(const Sentence& sentence) const {
    std::vector<int> ids;
    ids.reserve(sentence.size());
    for (const auto& t : sentence) ids.push_back(id(t));
    return ids;
}

Sentence Vocabulary::decode(const std::vector<int>& ids) const {
    Sentence out;
    for (int i : ids) {
        if (i == kPadId || i == kBosId || i == kEosId) continue;
        out.push_back(token(i));
    }
    return out;
}

std::vector<int> encode_source(const Sentence& s, const Vocabulary& vocab, std::size_t max_len) {
    std::vector<int> ids = vocab.encode(s);
    if (ids.size() + 1 > max_len) ids = truncate_tokens(ids, max_len - 1, "source sentence");
    ids.push_back(kEosId);
    return ids;
}

std::vector<EncodedDocument> encode_corpus(const std::vector<Document>& docs, const Vocabulary& src,
                                           const Vocabulary& tgt, std::size_t max_len) {
    if (max_len < 2) throw ConfigError("max_len must leave room for bos/eos");
    std::vector<EncodedDocument> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
        EncodedDocument ed{d.id, {}};
        for (const auto& p : d.pairs) {
            EncodedPair ep;
            ep.source = encode_source(p.source, src, max_len);
            std::vector<int> t = tgt.encode(p.target);
            if (t.size() + 1 > max_len) t = truncate_tokens(t, max_len - 1, "target sentence");
            ep.target_in.push_back(kBosId);
            ep.target_in.insert(ep.target_in.end(), t.begin(), t.end());
            ep.target_out = t;
            ep.target_out.push_back(kEosId);
            ed.pairs.push_back(std::move(ep));
        }
        out.push_back(std::move(ed));
    }
    return out;
}

BatchPlan plan_batches(const std::vector<EncodedDocument>& docs, std::size_t max_tokens_per_step,
                       std::uint64_t shuffle_seed) {
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }

    struct Lane {
        std::size_t doc;
        std::size_t next;
    };
    std::vector<Lane> lanes;
    std::size_t queued = 0;
    BatchPlan plan;
    auto tokens_of = [&](const Lane& l) { return docs[l.doc].pairs[l.next].source.size(); };
    while (queued < order.size() || !lanes.empty()) {
        std::vector<SentenceRef> step;
        std::size_t tokens = 0;
        bool full = false;
        for (Lane& lane : lanes) {
            const std::size_t n = tokens_of(lane);
            if (!step.empty() && tokens + n > max_tokens_per_step) {
                full = true;
                break;
            }
            step.push_back({lane.doc, lane.next});
            tokens += n;
        }
        while (!full && queued < order.size()) {
            Lane lane{order[queued], 0};
            if (docs[lane.doc].pairs.empty()) {
                ++queued;
                continue;
            }
            const std::size_t n = tokens_of(lane);
            if (!step.empty() && tokens + n > max_tokens_per_step) break;
            step.push_back({lane.doc, 0});
            tokens += n;
            lanes.push_back(lane);
            ++queued;
        }
        if (step.empty()) break;
        // advance every lane that contributed
        std::size_t taken = 0;
        for (Lane& lane : lanes) {
            if (taken < step.size() && step[taken].doc == lane.doc && step[taken].index == lane.next) {
                ++lane.next;
                ++taken;
            }
        }
        std::erase_if(lanes, [&](const Lane& l) { return l.next >= docs[l.doc].pairs.size(); });
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

bool plan_is_valid(const BatchPlan& plan, const std::vector<EncodedDocument>& docs) {
    std::vector<std::vector<std::ptrdiff_t>> step_of(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) step_of[d].assign(docs[d].pairs.size(), -1);
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        for (const SentenceRef& r : plan.steps[s]) {
            if (r.doc >= docs.size() || r.index >= docs[r.doc].pairs.size()) return false;
            if (step_of[r.doc][r.index] != -1) return false;
            step_of[r.doc][r.index] = static_cast<std::ptrdiff_t>(s);
        }
    }
    for (const auto& steps : step_of) {
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (steps[i] == -1) return false;
            if (i > 0 && steps[i] <= steps[i - 1]) return false;
        }
    }
    return true;
}

}  // namespace hanmt
