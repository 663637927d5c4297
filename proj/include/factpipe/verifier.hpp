#pragma once

#include "factpipe/llm_client.hpp"
#include "factpipe/retriever.hpp"
#include "factpipe/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace factpipe {

inline constexpr std::string_view kInternalSystemPrompt =
    "You are an assistant who verifies whether a claim from a medical response is True. You should rely "
    "exclusively on your own knowledge and always output \"True\" or \"False\" first. If there is not enough "
    "context or you are unable to verify the claim, then output \"False\".";

/// Internal-knowledge check: fixed system prompt plus the claim in braces.
[[nodiscard]] ChatRequest internal_prompt(std::string_view claim_text, const RunConfig& config);

/// Context check (reference answer or retrieved passages). User prompt only.
[[nodiscard]] ChatRequest context_prompt(std::string_view claim_text, std::string_view context,
                                         const RunConfig& config);

struct ParsedVerdict {
    bool value = false;
    bool parse_ok = false;

    bool operator==(const ParsedVerdict&) const = default;
};

/// Looks at the first alphabetic token only: "true" / "false" in any case
/// parse; anything else is (false, parse_ok = false). Never throws.
[[nodiscard]] ParsedVerdict parse_verdict(std::string_view raw_output) noexcept;

/// Letters as seen by parse_verdict (ASCII plus the common alphabetic
/// scripts); everything else separates tokens.
[[nodiscard]] bool is_verdict_letter(char32_t cp) noexcept;

[[nodiscard]] Verdict verify_internal(const Claim& claim, LlmClient& client);

/// Throws MissingReference when `reference_text` is absent or blank.
[[nodiscard]] Verdict verify_with_reference(const Claim& claim, const std::optional<std::string>& reference_text,
                                            LlmClient& client);

/// Top-k passages as context. The query embedding, when given and the index
/// has embeddings, switches ranking to cosine.
[[nodiscard]] Verdict verify_with_retrieval(const Claim& claim, const CorpusIndex& index, std::size_t k,
                                            LlmClient& client,
                                            const std::optional<std::vector<double>>& query_embedding = std::nullopt);

struct VerifierSetup {
    Strategy strategy = Strategy::Internal;
    std::size_t k = kDefaultTopK;
    /// Reference strategy: document id -> reference_response.
    const std::map<std::string, std::optional<std::string>>* references = nullptr;
    /// Retrieval strategy.
    const CorpusIndex* index = nullptr;
    /// Retrieval strategy, optional: claim id -> query vector.
    const std::map<std::string, std::vector<double>>* query_embeddings = nullptr;
    /// Embed claims through the client when the index is dense and no vector
    /// was supplied.
    bool embed_queries = false;
};

struct VerificationOutcome {
    std::string claim_id;
    std::optional<Verdict> verdict;
    /// Retries exhausted; the claim is excluded from scores.
    bool failed = false;
    std::string error;
};

/// Verifies every claim concurrently (bounded by the client). Results are in
/// claim order. PermanentError and MissingReference propagate.
[[nodiscard]] std::vector<VerificationOutcome> verify_claims(std::span<const Claim> claims,
                                                             const VerifierSetup& setup, LlmClient& client);

} // namespace factpipe
