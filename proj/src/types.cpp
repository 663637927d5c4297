#include "factpipe/types.hpp"

#include "factpipe/text.hpp"

#include <unordered_set>

namespace factpipe {

std::string_view to_string(SpanLabel label) noexcept {
    switch (label) {
    case SpanLabel::Cause: return "Cause";
    case SpanLabel::Suggestion: return "Suggestion";
    case SpanLabel::Experience: return "Experience";
    case SpanLabel::Question: return "Question";
    case SpanLabel::Information: return "Information";
    }
    return "Information";
}

std::optional<SpanLabel> parse_span_label(std::string_view text) noexcept {
    for (auto label : {SpanLabel::Cause, SpanLabel::Suggestion, SpanLabel::Experience,
                       SpanLabel::Question, SpanLabel::Information}) {
        if (to_string(label) == text) {
            return label;
        }
    }
    return std::nullopt;
}

std::string_view to_string(TaxonomyLabel label) noexcept {
    switch (label) {
    case TaxonomyLabel::Unverifiable: return "Unverifiable";
    case TaxonomyLabel::Hallucinated: return "Hallucinated";
    case TaxonomyLabel::Incomplete: return "Incomplete";
    case TaxonomyLabel::IncorrectlyStructured: return "IncorrectlyStructured";
    case TaxonomyLabel::ContextDependent: return "ContextDependent";
    case TaxonomyLabel::Redundant: return "Redundant";
    case TaxonomyLabel::Omitted: return "Omitted";
    case TaxonomyLabel::Valid: return "Valid";
    }
    return "Valid";
}

std::optional<TaxonomyLabel> parse_taxonomy_label(std::string_view text) noexcept {
    for (auto label : kAllTaxonomyLabels) {
        if (to_string(label) == text) {
            return label;
        }
    }
    return std::nullopt;
}

std::vector<std::string> validate_claim_labels(const std::set<TaxonomyLabel>& labels) {
    std::vector<std::string> out;
    if (labels.contains(TaxonomyLabel::Omitted)) {
        out.emplace_back("taxonomy_labels: Omitted is not allowed on an individual claim");
    }
    if (labels.contains(TaxonomyLabel::Valid) && labels.size() > 1) {
        out.emplace_back("taxonomy_labels: Valid cannot be combined with other labels");
    }
    return out;
}

std::string make_claim_id(std::string_view document_id, std::size_t sentence_index,
                          std::size_t ordinal) {
    std::string id(document_id);
    id += "#s";
    id += std::to_string(sentence_index);
    id += "#c";
    id += std::to_string(ordinal);
    return id;
}

std::string_view to_string(Strategy strategy) noexcept {
    switch (strategy) {
    case Strategy::Internal: return "internal";
    case Strategy::Reference: return "reference";
    case Strategy::Retrieval: return "retrieval";
    }
    return "internal";
}

std::optional<Strategy> parse_strategy(std::string_view text) noexcept {
    const auto lower = to_lower_ascii(text);
    for (auto s : {Strategy::Internal, Strategy::Reference, Strategy::Retrieval}) {
        if (to_string(s) == lower) {
            return s;
        }
    }
    return std::nullopt;
}

std::vector<std::string> validate_verdict(const Verdict& verdict) {
    std::vector<std::string> out;
    if (verdict.claim_id.empty()) {
        out.emplace_back("claim_id: empty");
    }
    const bool is_retrieval = verdict.strategy == Strategy::Retrieval;
    if (is_retrieval != verdict.retrieved_snippet_ids.has_value()) {
        out.emplace_back("retrieved_snippet_ids: must be present iff strategy is retrieval");
    }
    if (!verdict.parse_ok && verdict.value) {
        out.emplace_back("value: must be false when parse_ok is false");
    }
    return out;
}

std::vector<std::string> validate_config(const RunConfig& config) {
    std::vector<std::string> out;
    if (config.model_name.empty()) {
        out.emplace_back("model_name: empty");
    }
    if (!(config.temperature >= 0.0)) {
        out.emplace_back("temperature: must be >= 0");
    }
    if (!(config.top_p > 0.0 && config.top_p <= 1.0)) {
        out.emplace_back("top_p: must be in (0, 1]");
    }
    if (config.max_tokens < 1) {
        out.emplace_back("max_tokens: must be >= 1");
    }
    if (config.top_k < 1) {
        out.emplace_back("top_k: must be >= 1");
    }
    if (config.concurrency_limit < 1) {
        out.emplace_back("concurrency_limit: must be >= 1");
    }
    if (!(config.nli_threshold >= 0.0 && config.nli_threshold <= 1.0)) {
        out.emplace_back("nli_threshold: must be in [0, 1]");
    }
    if (config.retry_max_attempts < 1) {
        out.emplace_back("retry_max_attempts: must be >= 1");
    }
    if (config.retry_base_ms < 0) {
        out.emplace_back("retry_base_ms: must be >= 0");
    }
    return out;
}

std::vector<std::string> validate_document(const Document& doc) {
    std::vector<std::string> out;
    if (doc.id.empty()) {
        out.emplace_back("id: empty");
    }
    if (doc.response.empty()) {
        out.emplace_back("response: empty");
    }
    if (doc.span_annotations) {
        const auto length = utf8_length(doc.response);
        for (std::size_t i = 0; i < doc.span_annotations->size(); ++i) {
            const auto& span = (*doc.span_annotations)[i];
            const auto prefix = "span_annotations[" + std::to_string(i) + "]: ";
            if (span.char_end > length) {
                out.push_back(prefix + "char_end out of range");
            }
            if (span.char_start >= span.char_end) {
                out.push_back(prefix + "char_start must be < char_end");
            }
        }
    }
    return out;
}

std::vector<std::string> validate_dataset(const std::vector<Document>& docs) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto prefix = "record " + std::to_string(i + 1) + ": ";
        for (auto& v : validate_document(docs[i])) {
            out.push_back(prefix + v);
        }
        if (!docs[i].id.empty() && !seen.insert(docs[i].id).second) {
            out.push_back(prefix + "id: duplicate '" + docs[i].id + "'");
        }
    }
    return out;
}

} // namespace factpipe
