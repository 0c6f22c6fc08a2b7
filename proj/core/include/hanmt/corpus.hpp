#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hanmt {

using Sentence = std::vector<std::string>;

/// Thrown for malformed or misaligned input files.
class FormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct SentencePair {
    Sentence source;
    Sentence target;
};

/// Sentences of one document in discourse order.
struct Document {
    std::string id;
    std::vector<SentencePair> pairs;
};

inline constexpr std::string_view kDocMarker = "<DOC>";

Sentence tokenize(std::string_view line);
std::string detokenize(const Sentence& tokens);

/// Reads line-aligned source/target files. A line equal to `marker` in both
/// files starts a new document; documents are named "doc<index>".
std::vector<Document> load_corpus(const std::string& source_path, const std::string& target_path,
                                  std::string_view marker = kDocMarker);
/// Same as load_corpus, from in-memory lines.
std::vector<Document> parse_corpus(const std::vector<std::string>& source_lines,
                                   const std::vector<std::string>& target_lines, std::string_view marker = kDocMarker);

/// One side of a corpus as documents of sentences, e.g. a translation output.
using SideDocuments = std::vector<std::vector<Sentence>>;
SideDocuments source_side(const std::vector<Document>& docs);
SideDocuments target_side(const std::vector<Document>& docs);
/// Reads one side alone (candidate or reference file).
SideDocuments load_side(const std::string& path, std::string_view marker = kDocMarker);
/// Writes one sentence per line with a marker line before every document.
void write_side(const std::string& path, const SideDocuments& docs, std::string_view marker = kDocMarker);
std::string format_side(const SideDocuments& docs, std::string_view marker = kDocMarker);

enum class Side { source, target };

/// token <-> id map with pad=0, unk=1, bos=2, eos=3 reserved.
class Vocabulary {
   public:
    static constexpr std::size_t kSpecials = 4;

    Vocabulary();
    /// The most frequent cap-4 tokens, ties broken lexicographically.
    static Vocabulary build(const std::vector<Document>& docs, std::size_t cap, Side side);
    /// One token per line in id order, specials first.
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t size() const { return tokens_.size(); }
    int id(std::string_view token) const;
    const std::string& token(int id) const;
    bool contains(std::string_view token) const;

    std::vector<int> encode(const Sentence& sentence) const;
    /// Maps ids back to tokens; pad/bos/eos are dropped.
    Sentence decode(const std::vector<int>& ids) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

   private:
    void add(std::string token);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

/// Id-encoded sentence pair ready for the model: source ends with eos,
/// target input starts with bos, target output ends with eos.
struct EncodedPair {
    std::vector<int> source;
    std::vector<int> target_in;
    std::vector<int> target_out;
};

struct EncodedDocument {
    std::string id;
    std::vector<EncodedPair> pairs;
};

std::vector<EncodedDocument> encode_corpus(const std::vector<Document>& docs, const Vocabulary& src,
                                           const Vocabulary& tgt, std::size_t max_len);
std::vector<int> encode_source(const Sentence& s, const Vocabulary& vocab, std::size_t max_len);

/// A sentence reference inside a corpus.
struct SentenceRef {
    std::size_t doc = 0;
    std::size_t index = 0;
    friend bool operator==(const SentenceRef&, const SentenceRef&) = default;
};

/// Ordered training steps. For any document, sentence n lands in a strictly
/// later step than sentence n-1.
struct BatchPlan {
    std::vector<std::vector<SentenceRef>> steps;
};

/// Shuffles documents with `seed`, then walks depth by depth so that sentence n
/// of many documents share a step. A step holds at most
/// `max_tokens_per_step` source tokens unless a single sentence exceeds it.
BatchPlan plan_batches(const std::vector<EncodedDocument>& docs, std::size_t max_tokens_per_step,
                       std::uint64_t shuffle_seed);
/// True when the ordering invariant holds and every sentence appears once.
bool plan_is_valid(const BatchPlan& plan, const std::vector<EncodedDocument>& docs);

}  // namespace hanmt
