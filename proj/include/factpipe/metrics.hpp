#pragma once

#include "factpipe/decomposer.hpp"
#include "factpipe/llm_client.hpp"
#include "factpipe/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace factpipe {

// Factuality -------------------------------------------------------------------

struct ResponseScore {
    std::string document_id;
    std::size_t claim_count = 0;
    std::size_t true_count = 0;
    /// true_count / claim_count; absent for 0-claim responses.
    std::optional<double> score;

    bool operator==(const ResponseScore&) const = default;
};

/// Every verdict is assumed to belong to `document_id`.
[[nodiscard]] ResponseScore response_factuality(std::string document_id, std::span<const Verdict> verdicts);

/// Mean score over responses with at least one claim. Throws EmptyDataset
/// when there are none.
[[nodiscard]] double dataset_factuality(std::span<const ResponseScore> scores);

/// Claim-pooled alternative: total true / total claims. Throws EmptyDataset.
[[nodiscard]] double dataset_factuality_micro(std::span<const ResponseScore> scores);

/// Groups verdicts by their claim's document. `document_ids` lists every
/// response of the dataset in output order; responses without verdicts get a
/// 0-claim record. Throws ValidationError on dangling claim or document ids.
[[nodiscard]] std::vector<ResponseScore> score_responses(std::span<const std::string> document_ids,
                                                         std::span<const Claim> claims,
                                                         std::span<const Verdict> verdicts);

/// Fraction of verdicts with parse_ok == false (0 for no verdicts).
[[nodiscard]] double unparseable_verdict_rate(std::span<const Verdict> verdicts) noexcept;

// Claim statistics ---------------------------------------------------------------

/// Decomposition outcome of one response.
struct DocumentClaims {
    std::string document_id;
    /// One entry per sentence (or unit).
    std::vector<std::size_t> claims_per_sentence;
    std::vector<std::string> claim_texts;
};

struct ClaimStats {
    std::size_t documents = 0;
    std::size_t sentences = 0;
    std::size_t claims = 0;
    double zero_claim_rate = 0.0;
    double claims_per_response_mean = 0.0;
    double claims_per_response_std = 0.0;
    double claims_per_sentence_mean = 0.0;
    double claims_per_sentence_std = 0.0;
    /// Absent when there are no claims.
    std::optional<double> tokens_per_claim_mean;
};

/// Sample mean and standard deviation (n - 1; 0 when n < 2).
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
[[nodiscard]] MeanStd mean_std(std::span<const double> values);

/// Throws EmptyDataset for no documents.
[[nodiscard]] ClaimStats claim_stats(std::span<const DocumentClaims> docs);

/// Nullopt when any unit of the response failed (such responses are left out
/// of the statistics).
[[nodiscard]] std::optional<DocumentClaims> summarize_decomposition(std::string document_id,
                                                                    std::span<const DecompositionResult> units);

// NLI ----------------------------------------------------------------------------

inline constexpr std::string_view kNliSystemPrompt =
    "You are an entailment model. You will be given a claim and a premise. You should determine if the premise "
    "entails the claim. If the premise entails the claim, return True. If the premise doesn't entail the claim, "
    "such as contradiction or neutral, return False. If you are not sure, return False. You should also return "
    "the entailment score, which is a float between 0 and 1. The higher the score, the more likely the premise "
    "entails the claim. The threshold for the label to be True is the score greater than 0.8. Output in the "
    "format of\n\nLabel: True/False\n\nScore: 0.6.";

[[nodiscard]] ChatRequest nli_prompt(std::string_view claim_text, std::string_view span_text,
                                     const RunConfig& config);

struct NliJudgment {
    std::string claim_id;
    std::size_t span_index = 0;
    std::string span_label;
    bool entail_label = false;
    double entail_score = 0.0;
    bool parse_ok = false;
    std::string raw_output;

    bool operator==(const NliJudgment&) const = default;
};

struct ParsedNli {
    bool label = false;
    double score = 0.0;
    bool parse_ok = false;
};

/// Reads the "Label:" and "Score:" lines (case-insensitive, markdown emphasis
/// ignored). A missing field or a score outside [0, 1] is a parse failure.
[[nodiscard]] ParsedNli parse_nli_output(std::string_view raw_output) noexcept;

/// entail_label = label is True and score > threshold.
[[nodiscard]] NliJudgment judge_nli(std::string claim_id, std::string_view raw_output, double threshold);

[[nodiscard]] NliJudgment nli_entail(const Claim& claim, std::string_view span_text, LlmClient& client);

/// Judges every claim against every verifiable span of its document,
/// concurrently. Output: claims order, then span order.
[[nodiscard]] std::vector<NliJudgment> nli_evaluate(std::span<const Document> docs, std::span<const Claim> claims,
                                                    LlmClient& client);

[[nodiscard]] bool has_verifiable_span(const Document& doc) noexcept;

struct VerifiableRates {
    std::size_t verifiable_documents = 0;
    std::size_t zero_claim_documents = 0;
    /// Absent when every verifiable response has 0 claims.
    std::optional<double> verifiable_rate;
    double adjusted_rate = 0.0;
    std::optional<double> penalization;
};

/// A claim counts as entailed when any of its judgments is. Throws
/// EmptyDataset when no document has a verifiable span.
[[nodiscard]] VerifiableRates verifiable_rates(std::span<const Document> docs, std::span<const Claim> claims,
                                               std::span<const NliJudgment> judgments);

/// Same aggregation from per-response entailed fractions (nullopt = 0 claims).
[[nodiscard]] VerifiableRates verifiable_rates_from_fractions(std::span<const std::optional<double>> fractions);

/// (1 - p0) * rate - p0: the adjusted rate implied by a macro rate and the
/// fraction p0 of verifiable responses without claims.
[[nodiscard]] double adjusted_verifiable_rate(double verifiable_rate, double zero_claim_fraction) noexcept;

// Annotation agreement -----------------------------------------------------------

struct AnnotationRecord {
    std::string claim_id;
    std::string annotator_id;
    TaxonomyLabel label = TaxonomyLabel::Valid;

    bool operator==(const AnnotationRecord&) const = default;
};

/// Rejects Omitted labels and duplicate (claim, annotator, label) triples.
[[nodiscard]] std::vector<std::string> validate_annotations(std::span<const AnnotationRecord> records);

/// Cohen's kappa between two annotators over the same claims. When every
/// claim carries exactly one label per annotator this is the multi-class
/// kappa; otherwise the mean of per-label binary kappas over the labels either
/// annotator used. Throws MismatchedClaimSets when the claim sets differ.
[[nodiscard]] double cohens_kappa(std::span<const AnnotationRecord> records_a,
                                  std::span<const AnnotationRecord> records_b);

/// Kappa of two parallel label sequences.
[[nodiscard]] double kappa_from_pairs(std::span<const std::pair<int, int>> pairs);

enum class Reconciliation { Annotator, Intersection };

struct TaxonomyRow {
    TaxonomyLabel label = TaxonomyLabel::Valid;
    std::size_t count = 0;
    double percent = 0.0;
};

struct TaxonomyBreakdown {
    std::size_t total_claims = 0;
    /// One row per label in kAllTaxonomyLabels order.
    std::vector<TaxonomyRow> rows;

    [[nodiscard]] const TaxonomyRow& row(TaxonomyLabel label) const;
};

/// Annotator: labels of `annotator_id` only. Intersection: a claim keeps a
/// label only if every annotator of that claim gave it. Percentages are over
/// distinct claims; Valid counts claims whose only label is Valid.
[[nodiscard]] TaxonomyBreakdown taxonomy_breakdown(std::span<const AnnotationRecord> records,
                                                   Reconciliation reconciliation,
                                                   const std::string& annotator_id = {});

} // namespace factpipe
