#pragma once

#include "factpipe/jsonl.hpp"
#include "factpipe/metrics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace factpipe {

[[nodiscard]] json to_json(const ResponseScore& score);
[[nodiscard]] json to_json(const ClaimStats& stats);
[[nodiscard]] json to_json(const VerifiableRates& rates);
[[nodiscard]] json to_json(const TaxonomyBreakdown& breakdown);
[[nodiscard]] json to_json(const NliJudgment& judgment);
[[nodiscard]] json to_json(const AnnotationRecord& record);

[[nodiscard]] NliJudgment nli_judgment_from_json(const json& j);
[[nodiscard]] AnnotationRecord annotation_from_json(const json& j);

[[nodiscard]] std::vector<NliJudgment> read_nli_judgments(const std::filesystem::path& path);
[[nodiscard]] std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);

/// "12.34%" for 0.1234.
[[nodiscard]] std::string format_percent(double fraction);
/// Fixed two decimals.
[[nodiscard]] std::string format_fixed2(double value);

/// Markdown tables for whichever report sections are present (keys as in the
/// merged report JSON: dataset_factuality, claim_stats, verifiable_rates,
/// taxonomy, kappa, manifest).
[[nodiscard]] std::string render_markdown(const json& report);

} // namespace factpipe
