#pragma once

#include "factpipe/llm_client.hpp"
#include "factpipe/segmenter.hpp"
#include "factpipe/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace factpipe {

inline constexpr std::string_view kSentencePlaceholder = "{sentence}";
inline constexpr std::string_view kResponseContextPlaceholder = "{response_context}";
inline constexpr std::string_view kQuestionContextPlaceholder = "{question_context}";

/// A decomposition prompt.
///
/// File format (UTF-8, LF):
///
///     #name: medical
///     #zero_claim_marker: No verifiable claim
///     #system            (optional; starts the system text)
///     ...
///     #body              (required when #system is used)
///     ...
///
/// Header lines come first. Without a #system section every line after the
/// headers is the body.
struct PromptTemplate {
    std::string name;
    std::optional<std::string> system_text;
    std::string body_text;
    std::string zero_claim_marker;

    bool operator==(const PromptTemplate&) const = default;
};

[[nodiscard]] std::vector<std::string> validate_template(const PromptTemplate& tmpl);

/// Throws TemplateError on malformed headers or an invalid template.
[[nodiscard]] PromptTemplate parse_template(std::string_view file_text);
[[nodiscard]] PromptTemplate load_template(const std::filesystem::path& path);
[[nodiscard]] std::string serialize_template(const PromptTemplate& tmpl);

/// SHA-256 of serialize_template(tmpl).
[[nodiscard]] std::string template_digest(const PromptTemplate& tmpl);

/// Substitutes the placeholders in one left-to-right pass, so substituted text
/// is never rescanned. Throws TemplateError when {sentence} is missing.
[[nodiscard]] ChatRequest build_decomposition_prompt(const Sentence& sentence, std::string_view response_context,
                                                     std::string_view question_context,
                                                     const PromptTemplate& tmpl, const RunConfig& config);

/// Copy with the single occurrence of `old_phrase` (across system and body
/// text) replaced and "-adapted" appended to the name. Throws AdaptError
/// unless the phrase occurs exactly once.
[[nodiscard]] PromptTemplate adapt_template_domain(const PromptTemplate& tmpl, std::string_view old_phrase,
                                                   std::string_view new_phrase);

inline constexpr std::size_t kMaxClaimLength = 500;

struct ParsedClaims {
    std::vector<std::string> claims;
    /// Lines rejected as malformed (longer than kMaxClaimLength).
    std::size_t dropped_lines = 0;
    bool zero_claim_marker_seen = false;
};

/// One claim per line; list markers ("-", "*", "•", "1.", "2)", "(3)") and
/// surrounding whitespace are stripped, blank lines dropped. Any line that
/// contains the marker (ASCII case-insensitive) empties the result.
[[nodiscard]] ParsedClaims parse_claims(std::string_view raw_output, std::string_view zero_claim_marker);

struct DecompositionResult {
    std::string document_id;
    std::size_t sentence_index = 0;
    std::vector<Claim> claims;
    std::string raw_output;
    bool zero_claim = false;
    /// The LLM call exhausted its retries; excluded from metrics.
    bool failed = false;
    std::string error;
    std::size_t dropped_lines = 0;
};

enum class Segmentation { Sentences, WholeResponse };

[[nodiscard]] std::vector<Sentence> segment(std::string_view response, Segmentation mode);

/// Question plus its optional context, newline separated.
[[nodiscard]] std::string full_question_context(const Document& doc);

/// One result per unit of `doc.response`, in order. Only PermanentError
/// propagates.
[[nodiscard]] std::vector<DecompositionResult> decompose_document(const Document& doc, const PromptTemplate& tmpl,
                                                                  Segmentation mode, LlmClient& client);

/// Decomposes every unit of every document concurrently (bounded by the
/// client's concurrency limit). Results come back grouped per document in
/// input order.
[[nodiscard]] std::vector<std::vector<DecompositionResult>> decompose_documents(std::span<const Document> docs,
                                                                                const PromptTemplate& tmpl,
                                                                                Segmentation mode, LlmClient& client);

} // namespace factpipe
