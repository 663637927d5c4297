#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace factpipe {

/// Labels of annotated answer spans.
enum class SpanLabel { Cause, Suggestion, Experience, Question, Information };

[[nodiscard]] std::string_view to_string(SpanLabel label) noexcept;
[[nodiscard]] std::optional<SpanLabel> parse_span_label(std::string_view text) noexcept;

/// Cause, Suggestion and Information spans carry checkable content; Experience
/// and Question spans do not.
[[nodiscard]] constexpr bool is_verifiable(SpanLabel label) noexcept {
    return label == SpanLabel::Cause || label == SpanLabel::Suggestion ||
           label == SpanLabel::Information;
}

/// Offsets are Unicode code point indices into Document::response.
struct SpanAnnotation {
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    SpanLabel label = SpanLabel::Information;

    bool operator==(const SpanAnnotation&) const = default;
};

/// One QA record.
struct Document {
    std::string id;
    std::string question;
    std::optional<std::string> question_context;
    std::optional<std::string> reference_response;
    std::string response;
    std::optional<std::vector<SpanAnnotation>> span_annotations;

    bool operator==(const Document&) const = default;
};

/// Claim-quality categories. Omitted only describes a whole claim set (a
/// 0-claim response) and is never attached to an individual claim.
enum class TaxonomyLabel {
    Unverifiable,
    Hallucinated,
    Incomplete,
    IncorrectlyStructured,
    ContextDependent,
    Redundant,
    Omitted,
    Valid,
};

inline constexpr TaxonomyLabel kAllTaxonomyLabels[] = {
    TaxonomyLabel::Valid,        TaxonomyLabel::Unverifiable,
    TaxonomyLabel::Hallucinated, TaxonomyLabel::Incomplete,
    TaxonomyLabel::IncorrectlyStructured, TaxonomyLabel::ContextDependent,
    TaxonomyLabel::Redundant,    TaxonomyLabel::Omitted,
};

[[nodiscard]] std::string_view to_string(TaxonomyLabel label) noexcept;
[[nodiscard]] std::optional<TaxonomyLabel> parse_taxonomy_label(std::string_view text) noexcept;

/// Violations of the per-claim label rules (Omitted never legal, Valid exclusive).
[[nodiscard]] std::vector<std::string> validate_claim_labels(const std::set<TaxonomyLabel>& labels);

struct Claim {
    std::string id;
    std::string document_id;
    std::size_t sentence_index = 0;
    std::string text;
    std::set<TaxonomyLabel> taxonomy_labels;

    bool operator==(const Claim&) const = default;
};

/// "<doc_id>#s<sentence_index>#c<ordinal>"
[[nodiscard]] std::string make_claim_id(std::string_view document_id, std::size_t sentence_index,
                                        std::size_t ordinal);

enum class Strategy { Internal, Reference, Retrieval };

[[nodiscard]] std::string_view to_string(Strategy strategy) noexcept;
[[nodiscard]] std::optional<Strategy> parse_strategy(std::string_view text) noexcept;

struct Verdict {
    std::string claim_id;
    bool value = false;
    Strategy strategy = Strategy::Internal;
    std::string raw_output;
    bool parse_ok = false;
    /// Present iff strategy == Retrieval, in rank order.
    std::optional<std::vector<std::string>> retrieved_snippet_ids;

    bool operator==(const Verdict&) const = default;
};

[[nodiscard]] std::vector<std::string> validate_verdict(const Verdict& verdict);

struct RunConfig {
    std::string model_name = "gpt-4o-mini";
    std::string endpoint_url;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 256;
    int top_k = 10;
    int concurrency_limit = 8;
    std::filesystem::path cache_dir = ".factpipe_cache";
    double nli_threshold = 0.8;

    // Transport tuning.
    int retry_max_attempts = 5;
    int retry_base_ms = 1000;
    int request_timeout_s = 120;

    // Optional embedding endpoint for dense retrieval of claims.
    std::string embedding_endpoint_url;
    std::string embedding_model;
};

[[nodiscard]] std::vector<std::string> validate_config(const RunConfig& config);

/// Empty result iff every Document and SpanAnnotation invariant holds. Each
/// entry names the field and the rule it breaks.
[[nodiscard]] std::vector<std::string> validate_document(const Document& doc);

/// Also checks id uniqueness across the dataset. Entries are prefixed with the
/// 1-based record number.
[[nodiscard]] std::vector<std::string> validate_dataset(const std::vector<Document>& docs);

} // namespace factpipe
