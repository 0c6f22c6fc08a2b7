#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "hanmt/metrics.hpp"
#include "hanmt/report.hpp"
#include "hanmt/synthetic.hpp"
#include "test_support.hpp"

using namespace hanmt;

namespace {

SideDocuments one(const std::string& sentence) { return {{tokenize(sentence)}}; }

std::vector<Sentence> doc(std::initializer_list<const char*> lines) {
    std::vector<Sentence> out;
    for (const char* l : lines) out.push_back(tokenize(l));
    return out;
}

}  // namespace

TEST(Bleu, IdentityIsHundred) {
    const SideDocuments d{{tokenize("the cat sat on the mat"), tokenize("a b")}, {tokenize("x y z w v")}};
    EXPECT_DOUBLE_EQ(bleu(d, d).score, 100.0);
}

TEST(Bleu, MissingFourGramGivesZero) {
    const BleuResult r = bleu(one("a b c d"), one("a b c e"));
    EXPECT_EQ(r.score, 0.0);
    ASSERT_EQ(r.precisions.size(), 4u);
    EXPECT_DOUBLE_EQ(r.precisions[0], 0.75);
    EXPECT_DOUBLE_EQ(r.precisions[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.precisions[2], 0.5);
    EXPECT_DOUBLE_EQ(r.precisions[3], 0.0);
}

TEST(Bleu, BrevityPenaltyOnShortCandidate) {
    const BleuResult r = bleu(one("a b"), one("a b c d"), 2);
    EXPECT_NEAR(r.brevity_penalty, std::exp(-1.0), 1e-15);
    EXPECT_NEAR(r.score, 36.787944117144235, 0.01);
}

TEST(Bleu, CountsAreClipped) {
    EXPECT_NEAR(bleu(one("the the the the"), one("the cat"), 1).score, 25.0, 0.01);
}

TEST(Bleu, CorpusLevelPooling) {
    const SideDocuments cand{{tokenize("a b c"), tokenize("x y")}};
    const SideDocuments ref{{tokenize("a b c"), tokenize("x z")}};
    EXPECT_NEAR(bleu(cand, ref, 2).score, 73.02967433402215, 0.01);
}

TEST(Bleu, FourGramGeometricMean) {
    EXPECT_NEAR(bleu(one("a b c d e"), one("a b c d f")).score, 66.8740304976422, 0.01);
}

TEST(Bleu, DocumentOrderDoesNotMatter) {
    const SideDocuments c{{tokenize("a b c d e")}, {tokenize("q r s t u v")}};
    const SideDocuments r{{tokenize("a b c d f")}, {tokenize("q r s t u w")}};
    const SideDocuments c2{c[1], c[0]};
    const SideDocuments r2{r[1], r[0]};
    EXPECT_DOUBLE_EQ(bleu(c, r).score, bleu(c2, r2).score);
}

TEST(Bleu, RejectsMisalignmentAndEmptyReference) {
    EXPECT_THROW(bleu(one("a"), SideDocuments{{tokenize("a"), tokenize("b")}}), std::invalid_argument);
    EXPECT_THROW(bleu(SideDocuments{{Sentence{}}}, SideDocuments{{Sentence{}}}), std::invalid_argument);
    EXPECT_EQ(bleu(SideDocuments{{Sentence{}}}, one("a b")).score, 0.0);
}

TEST(WordListAccuracy, IdentityIsPerfect) {
    const WordSet pronouns{"he", "she", "her", "it"};
    const Sentence s = tokenize("he said it was her book and she agreed");
    const Ratio r = word_list_accuracy(s, s, pronouns, 3);
    EXPECT_EQ(r.total, 4u);
    EXPECT_EQ(r.value(), 1.0);
}

TEST(WordListAccuracy, WrongPronounIsAMiss) {
    const Ratio r = word_list_accuracy(tokenize("she saw her"), tokenize("he saw her"), {"he", "she", "her"}, 3);
    EXPECT_EQ(r.hits, 1u);
    EXPECT_EQ(r.total, 2u);
}

TEST(WordListAccuracy, WindowAndConsumption) {
    const WordSet words{"it"};
    // occurrence five positions away is outside the default window
    EXPECT_EQ(word_list_accuracy(tokenize("a b c d e it"), tokenize("it a b c d e"), words, 3).hits, 0u);
    EXPECT_EQ(word_list_accuracy(tokenize("a b c d e it"), tokenize("it a b c d e"), words, 5).hits, 1u);
    // one candidate occurrence cannot serve two reference occurrences
    EXPECT_EQ(word_list_accuracy(tokenize("it x"), tokenize("it it"), words, 3).hits, 1u);
    EXPECT_FALSE(word_list_accuracy(tokenize("a"), tokenize("b"), words, 3).value().has_value());
}

TEST(WordListAccuracy, CaseInsensitive) {
    EXPECT_EQ(word_list_accuracy(tokenize("He left"), tokenize("he left"), {"he"}, 3).hits, 1u);
}

TEST(LexicalCohesion, DistinctWordsScoreZero) {
    const Ratio r = lexical_cohesion(doc({"alpha beta", "gamma delta"}), {});
    EXPECT_EQ(r.total, 4u);
    EXPECT_EQ(r.value(), 0.0);
}

TEST(LexicalCohesion, RepetitionAndLexicon) {
    const WordSet stop{"runs", "sleeps", "."};
    EXPECT_EQ(lexical_cohesion(doc({"dog runs .", "dog sleeps"}), stop).value(), 0.5);
    const SynonymLexicon lex{{"cat", {"feline"}}, {"feline", {"cat"}}};
    EXPECT_EQ(lexical_cohesion(doc({"cat here", "feline there"}), {}, &lex).hits, 1u);
    EXPECT_EQ(lexical_cohesion(doc({"cat here", "feline there"}), {}).hits, 0u);
    EXPECT_FALSE(lexical_cohesion(doc({"dog runs"}), {"dog", "runs"}).value().has_value());
}

TEST(LexicalCohesion, ReplacingWithEarlierWordNeverLowersScore) {
    const auto base = doc({"red green blue", "cyan red magenta"});
    const double before = *lexical_cohesion(base, {}).value();
    auto changed = base;
    changed[1][0] = "green";
    EXPECT_GE(*lexical_cohesion(changed, {}).value(), before);
}

TEST(Coherence, RepeatedSentencesScoreOne) {
    const Embeddings e{{"a", {1, 2}}, {"b", {-1, 0.5}}};
    const CoherenceResult r = coherence(doc({"a b", "a b", "b a"}), e);
    EXPECT_NEAR(*r.score, 1.0, 1e-12);
    EXPECT_EQ(r.pairs, 2u);
}

TEST(Coherence, OrthogonalAndHandComputedCases) {
    const Embeddings e{{"x", {1, 0}}, {"y", {1, 1}}, {"z", {0, 2}}};
    EXPECT_NEAR(*coherence(doc({"x", "z"}), e).score, 0.0, 1e-15);
    EXPECT_NEAR(*coherence(doc({"x", "y", "x z"}), e).score, 0.8278950396185306, 1e-12);
    Embeddings scaled = e;
    for (auto& [w, v] : scaled)
        for (double& x : v) x *= 3.5;
    EXPECT_NEAR(*coherence(doc({"x", "y", "x z"}), scaled).score, 0.8278950396185306, 1e-12);
}

TEST(Coherence, UnknownWordsAreSkipped) {
    const Embeddings e{{"x", {1, 0}}};
    const CoherenceResult r = coherence(doc({"x", "unknown", "x"}), e);
    EXPECT_EQ(r.skipped, 2u);
    EXPECT_FALSE(r.score.has_value());
}

TEST(AmbiguityAccuracy, ScoresTruthPositions) {
    const SideDocuments cand{{tokenize("t1 amb2"), tokenize("t3")}, {tokenize("amb1 t0")}};
    const std::vector<GroundTruth> truth{{"doc0", 0, 1, "amb2"}, {"doc1", 0, 0, "amb3"}};
    const Ratio r = ambiguity_accuracy(cand, truth);
    EXPECT_EQ(r.hits, 1u);
    EXPECT_EQ(r.total, 2u);
    // a short candidate counts as a miss, not an error
    const std::vector<GroundTruth> beyond{{"doc0", 1, 4, "amb0"}};
    EXPECT_EQ(ambiguity_accuracy(cand, beyond).total, 1u);
}

TEST(ResourceFiles, LoadersParseDocumentedFormats) {
    const std::string words = hanmt::testing::temp_path("words.txt");
    std::ofstream(words) << "# pronouns\nHe\n\nshe\n";
    EXPECT_EQ(load_word_list(words), (WordSet{"he", "she"}));
    const std::string lex = hanmt::testing::temp_path("lex.txt");
    std::ofstream(lex) << "cat feline\n";
    const SynonymLexicon l = load_lexicon(lex);
    EXPECT_EQ(l.at("feline"), std::vector<std::string>{"cat"});
    const std::string emb = hanmt::testing::temp_path("emb.txt");
    std::ofstream(emb) << "2 3\na 1 2 3\nb 4 5 6\n";
    const Embeddings e = load_embeddings(emb);
    EXPECT_EQ(e.at("b"), (std::vector<double>{4, 5, 6}));
    std::ofstream(emb) << "a 1 2\nb 1\n";
    EXPECT_THROW(load_embeddings(emb), FormatError);
}

TEST(Report, IdentityReportIsPerfect) {
    EvalInputs in;
    in.references = {{tokenize("he saw the dog"), tokenize("the dog saw him")}};
    in.candidates = in.references;
    in.pronouns = WordSet{"he", "him"};
    in.nouns = WordSet{"dog"};
    in.stopwords = WordSet{"the", "saw"};
    in.embeddings = Embeddings{{"dog", {1, 0}}, {"he", {0, 1}}, {"him", {0, 1}}};
    const EvalReport r = evaluate(in);
    EXPECT_EQ(r.bleu.score, 100.0);
    EXPECT_EQ(r.pronoun_accuracy->value(), 1.0);
    EXPECT_EQ(r.noun_accuracy->value(), 1.0);
    EXPECT_EQ(r.cohesion_documents, 1u);
    ASSERT_EQ(r.documents.size(), 1u);
    EXPECT_EQ(r.documents[0].id, "doc0");
    const std::string text = format_report_text(r);
    EXPECT_NE(text.find("100.00"), std::string::npos) << text;
    EXPECT_NE(text.find("APT-simplified"), std::string::npos);
    const std::string records = format_report_records(r);
    EXPECT_NE(records.find("record=metric name=bleu value=100"), std::string::npos) << records;
    EXPECT_NE(records.find("record=metric name=pronoun_acc value=1"), std::string::npos) << records;
    EXPECT_NE(records.find("record=document doc=doc0"), std::string::npos) << records;
}
