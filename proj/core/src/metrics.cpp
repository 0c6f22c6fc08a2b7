#include "hanmt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace hanmt {
namespace {

void check_aligned(const SideDocuments& a, const SideDocuments& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(fmt::format("{} candidate documents but {} reference documents", a.size(), b.size()));
    }
    for (std::size_t d = 0; d < a.size(); ++d) {
        if (a[d].size() != b[d].size()) {
            throw std::invalid_argument(fmt::format("document {}: {} candidate sentences but {} reference sentences", d,
                                                    a[d].size(), b[d].size()));
        }
    }
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Sentence(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                                     s.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
    }
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

BleuResult bleu(const SideDocuments& candidates, const SideDocuments& references, std::size_t max_n) {
    if (max_n == 0) throw std::invalid_argument("BLEU needs max_n >= 1");
    check_aligned(candidates, references);
    BleuResult r;
    std::vector<std::size_t> matches(max_n, 0);
    std::vector<std::size_t> totals(max_n, 0);
    for (std::size_t d = 0; d < candidates.size(); ++d) {
        for (std::size_t s = 0; s < candidates[d].size(); ++s) {
            const Sentence& cand = candidates[d][s];
            const Sentence& ref = references[d][s];
            r.candidate_length += cand.size();
            r.reference_length += ref.size();
            for (std::size_t n = 1; n <= max_n; ++n) {
                const auto ref_counts = ngram_counts(ref, n);
                for (const auto& [gram, count] : ngram_counts(cand, n)) {
                    auto it = ref_counts.find(gram);
                    if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
                }
                if (cand.size() >= n) totals[n - 1] += cand.size() - n + 1;
            }
        }
    }
    if (r.reference_length == 0) throw std::invalid_argument("BLEU reference is empty");
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 0; n < max_n; ++n) {
        const double p = totals[n] == 0 ? 0.0 : static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        r.precisions.push_back(p);
        if (p == 0.0) {
            zero = true;
        } else {
            log_sum += std::log(p);
        }
    }
    if (r.candidate_length == 0) {
        r.brevity_penalty = 0.0;
    } else {
        r.brevity_penalty = std::min(1.0, std::exp(1.0 - static_cast<double>(r.reference_length) /
                                                             static_cast<double>(r.candidate_length)));
    }
    r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
    return r;
}

Ratio word_list_accuracy(const Sentence& candidate, const Sentence& reference, const WordSet& words, std::size_t window) {
    Ratio r;
    std::vector<bool> used(candidate.size(), false);
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const std::string word = to_lower(reference[i]);
        if (!words.contains(word)) continue;
        ++r.total;
        std::optional<std::size_t> best;
        const std::size_t lo = i >= window ? i - window : 0;
        const std::size_t hi = std::min(candidate.size(), i + window + 1);
        for (std::size_t j = lo; j < hi; ++j) {
            if (used[j] || to_lower(candidate[j]) != word) continue;
            const auto dist = [&](std::size_t x) { return x > i ? x - i : i - x; };
            if (!best || dist(j) < dist(*best)) best = j;
        }
        if (best) {
            used[*best] = true;
            ++r.hits;
        }
    }
    return r;
}

Ratio word_list_accuracy(const SideDocuments& candidates, const SideDocuments& references, const WordSet& words,
                         std::size_t window) {
    check_aligned(candidates, references);
    Ratio r;
    for (std::size_t d = 0; d < candidates.size(); ++d) {
        for (std::size_t s = 0; s < candidates[d].size(); ++s) {
            r += word_list_accuracy(candidates[d][s], references[d][s], words, window);
        }
    }
    return r;
}

Ratio lexical_cohesion(const std::vector<Sentence>& document, const WordSet& stopwords, const SynonymLexicon* lexicon) {
    Ratio r;
    WordSet seen;
    for (const auto& sentence : document) {
        for (const auto& token : sentence) {
            const std::string w = to_lower(token);
            if (stopwords.contains(w)) continue;
            ++r.total;
            bool cohesive = seen.contains(w);
            if (!cohesive && lexicon != nullptr) {
                if (auto it = lexicon->find(w); it != lexicon->end()) {
                    cohesive = std::any_of(it->second.begin(), it->second.end(),
                                           [&](const std::string& s) { return seen.contains(s); });
                }
            }
            if (cohesive) ++r.hits;
            seen.insert(w);
        }
    }
    return r;
}

CoherenceResult coherence(const std::vector<Sentence>& document, const Embeddings& embeddings) {
    std::vector<std::optional<std::vector<double>>> vectors;
    for (const auto& sentence : document) {
        std::optional<std::vector<double>> sum;
        std::size_t known = 0;
        for (const auto& token : sentence) {
            auto it = embeddings.find(token);
            if (it == embeddings.end()) it = embeddings.find(to_lower(token));
            if (it == embeddings.end()) continue;
            if (!sum) sum.emplace(it->second.size(), 0.0);
            if (it->second.size() != sum->size()) throw FormatError("embeddings have inconsistent dimensions");
            for (std::size_t i = 0; i < sum->size(); ++i) (*sum)[i] += it->second[i];
            ++known;
        }
        if (sum) {
            for (double& v : *sum) v /= static_cast<double>(known);
            if (std::all_of(sum->begin(), sum->end(), [](double v) { return v == 0.0; })) sum.reset();
        }
        vectors.push_back(std::move(sum));
    }
    CoherenceResult r;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < vectors.size(); ++i) {
        if (!vectors[i] || !vectors[i + 1]) {
            ++r.skipped;
            continue;
        }
        total += cosine(*vectors[i], *vectors[i + 1]);
        ++r.pairs;
    }
    if (r.pairs > 0) r.score = total / static_cast<double>(r.pairs);
    return r;
}

Ratio ambiguity_accuracy(const SideDocuments& candidates, const std::vector<GroundTruth>& truth) {
    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t d = 0; d < candidates.size(); ++d) index[fmt::format("doc{}", d)] = d;
    Ratio r;
    for (const auto& t : truth) {
        auto it = index.find(t.doc_id);
        if (it == index.end() || t.sentence >= candidates[it->second].size()) {
            throw std::invalid_argument(
                fmt::format("ground truth refers to {} sentence {}, which the candidates lack", t.doc_id, t.sentence));
        }
        const Sentence& s = candidates[it->second][t.sentence];
        ++r.total;
        if (t.position < s.size() && s[t.position] == t.token) ++r.hits;
    }
    return r;
}

WordSet load_word_list(const std::string& path) {
    WordSet out;
    for (const auto& line : read_lines(path)) {
        const auto tokens = tokenize(line);
        if (tokens.empty() || tokens.front().starts_with('#')) continue;
        for (const auto& t : tokens) out.insert(to_lower(t));
    }
    return out;
}

SynonymLexicon load_lexicon(const std::string& path) {
    SynonymLexicon out;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        const auto tokens = tokenize(line);
        if (tokens.empty() || tokens.front().starts_with('#')) continue;
        if (tokens.size() != 2) throw FormatError(fmt::format("'{}' line {}: expected two words", path, line_no));
        const std::string a = to_lower(tokens[0]);
        const std::string b = to_lower(tokens[1]);
        out[a].push_back(b);
        out[b].push_back(a);
    }
    return out;
}

Embeddings load_embeddings(const std::string& path) {
    Embeddings out;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        const auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        if (line_no == 1 && tokens.size() == 2 &&
            std::all_of(tokens.begin(), tokens.end(),
                        [](const std::string& t) { return std::all_of(t.begin(), t.end(), ::isdigit); })) {
            continue;  // word2vec-style "count dim" header
        }
        if (tokens.size() < 2) throw FormatError(fmt::format("'{}' line {}: expected a word and a vector", path, line_no));
        std::vector<double> v;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tokens[i], &used));
                if (used != tokens[i].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw FormatError(fmt::format("'{}' line {}: '{}' is not a number", path, line_no, tokens[i]));
            }
        }
        if (dim == 0) dim = v.size();
        if (v.size() != dim) {
            throw FormatError(fmt::format("'{}' line {}: {} values, expected {}", path, line_no, v.size(), dim));
        }
        out[tokens[0]] = std::move(v);
    }
    return out;
}

}  // namespace hanmt
