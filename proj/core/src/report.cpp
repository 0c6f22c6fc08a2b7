#include "hanmt/report.hpp"

#include <fmt/format.h>

namespace hanmt {
namespace {

std::string ratio_text(const std::optional<Ratio>& r) {
    if (!r) return "n/a";
    if (!r->value()) return "undefined (0 occurrences)";
    return fmt::format("{:.4f} ({}/{})", *r->value(), r->hits, r->total);
}

std::string optional_value(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : "undefined"; }

std::string ratio_record(std::string_view name, const Ratio& r) {
    return fmt::format("record=metric name={} value={} hits={} total={}\n", name, optional_value(r.value()), r.hits,
                       r.total);
}

}  // namespace

EvalReport evaluate(const EvalInputs& in) {
    EvalReport report;
    report.bleu = bleu(in.candidates, in.references);
    if (in.pronouns) report.pronoun_accuracy = word_list_accuracy(in.candidates, in.references, *in.pronouns, in.window);
    if (in.nouns) report.noun_accuracy = word_list_accuracy(in.candidates, in.references, *in.nouns, in.window);
    if (in.truth) report.ambiguity_accuracy = ambiguity_accuracy(in.candidates, *in.truth);

    double cohesion_sum = 0.0;
    double coherence_sum = 0.0;
    for (std::size_t d = 0; d < in.candidates.size(); ++d) {
        DocumentReport doc;
        doc.id = fmt::format("doc{}", d);
        // a document whose reference has no words scores 0
        bool has_words = false;
        for (const auto& s : in.references[d]) has_words = has_words || !s.empty();
        if (has_words) doc.bleu = bleu({in.candidates[d]}, {in.references[d]}).score;
        if (in.stopwords) {
            doc.cohesion = lexical_cohesion(in.candidates[d], *in.stopwords, in.lexicon ? &*in.lexicon : nullptr);
            if (auto v = doc.cohesion->value()) {
                cohesion_sum += *v;
                ++report.cohesion_documents;
            }
        }
        if (in.embeddings) {
            doc.coherence = coherence(in.candidates[d], *in.embeddings);
            report.coherence_pairs += doc.coherence->pairs;
            report.coherence_skipped += doc.coherence->skipped;
            if (doc.coherence->score) {
                coherence_sum += *doc.coherence->score;
                ++report.coherence_documents;
            }
        }
        report.documents.push_back(std::move(doc));
    }
    if (report.cohesion_documents > 0) report.cohesion = cohesion_sum / static_cast<double>(report.cohesion_documents);
    if (report.coherence_documents > 0) {
        report.coherence = coherence_sum / static_cast<double>(report.coherence_documents);
    }
    return report;
}

std::string format_report_text(const EvalReport& r) {
    std::string out;
    out += fmt::format("BLEU                 {:.2f}\n", r.bleu.score);
    std::string precisions;
    for (std::size_t n = 0; n < r.bleu.precisions.size(); ++n) {
        precisions += fmt::format("{}p{}={:.4f}", n == 0 ? "" : " ", n + 1, r.bleu.precisions[n]);
    }
    out += fmt::format("  {} BP={:.4f} hyp_len={} ref_len={}\n", precisions, r.bleu.brevity_penalty,
                       r.bleu.candidate_length, r.bleu.reference_length);
    if (r.pronoun_accuracy) out += fmt::format("Pronoun acc (APT-simplified) {}\n", ratio_text(r.pronoun_accuracy));
    if (r.noun_accuracy) out += fmt::format("Noun acc (APT-simplified)    {}\n", ratio_text(r.noun_accuracy));
    if (r.ambiguity_accuracy) out += fmt::format("Ambiguous-token acc  {}\n", ratio_text(r.ambiguity_accuracy));
    const bool with_cohesion = !r.documents.empty() && r.documents.front().cohesion.has_value();
    const bool with_coherence = !r.documents.empty() && r.documents.front().coherence.has_value();
    if (with_cohesion) {
        out += fmt::format("Lexical cohesion     {} over {} documents\n", optional_value(r.cohesion),
                           r.cohesion_documents);
    }
    if (with_coherence) {
        out += fmt::format("Coherence            {} over {} documents ({} pairs, {} skipped)\n",
                           optional_value(r.coherence), r.coherence_documents, r.coherence_pairs, r.coherence_skipped);
    }
    out += "\nper document:\n";
    for (const auto& d : r.documents) {
        out += fmt::format("  {:<10} BLEU {:6.2f}", d.id, d.bleu);
        if (d.cohesion) out += fmt::format("  cohesion {}", optional_value(d.cohesion->value()));
        if (d.coherence) out += fmt::format("  coherence {}", optional_value(d.coherence->score));
        out += '\n';
    }
    return out;
}

std::string format_report_records(const EvalReport& r) {
    std::string out;
    out += fmt::format("record=metric name=bleu value={:.6f} bp={:.6f} hyp_len={} ref_len={}", r.bleu.score,
                       r.bleu.brevity_penalty, r.bleu.candidate_length, r.bleu.reference_length);
    for (std::size_t n = 0; n < r.bleu.precisions.size(); ++n) out += fmt::format(" p{}={:.6f}", n + 1, r.bleu.precisions[n]);
    out += '\n';
    if (r.pronoun_accuracy) out += ratio_record("pronoun_acc", *r.pronoun_accuracy);
    if (r.noun_accuracy) out += ratio_record("noun_acc", *r.noun_accuracy);
    if (r.ambiguity_accuracy) out += ratio_record("ambiguity_acc", *r.ambiguity_accuracy);
    if (!r.documents.empty() && r.documents.front().cohesion) {
        out += fmt::format("record=metric name=cohesion value={} documents={}\n", optional_value(r.cohesion),
                           r.cohesion_documents);
    }
    if (!r.documents.empty() && r.documents.front().coherence) {
        out += fmt::format("record=metric name=coherence value={} documents={} pairs={} skipped={}\n",
                           optional_value(r.coherence), r.coherence_documents, r.coherence_pairs, r.coherence_skipped);
    }
    for (const auto& d : r.documents) {
        out += fmt::format("record=document doc={} bleu={:.6f}", d.id, d.bleu);
        if (d.cohesion) {
            out += fmt::format(" cohesion={} cohesion_hits={} cohesion_total={}", optional_value(d.cohesion->value()),
                               d.cohesion->hits, d.cohesion->total);
        }
        if (d.coherence) {
            out += fmt::format(" coherence={} coherence_pairs={} coherence_skipped={}",
                               optional_value(d.coherence->score), d.coherence->pairs, d.coherence->skipped);
        }
        out += '\n';
    }
    return out;
}

}  // namespace hanmt
