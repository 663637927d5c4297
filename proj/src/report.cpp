#include "factpipe/report.hpp"

#include "factpipe/error.hpp"

#include <cstdio>

namespace factpipe {

namespace {

json optional_real(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ValidationError(std::string(key) + ": missing");
    }
    return *it;
}

std::string require_string(const json& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_string()) {
        throw ValidationError(std::string(key) + ": expected string");
    }
    return v.get<std::string>();
}

bool require_bool(const json& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_boolean()) {
        throw ValidationError(std::string(key) + ": expected boolean");
    }
    return v.get<bool>();
}

} // namespace

json to_json(const ResponseScore& score) {
    return {{"document_id", score.document_id},
            {"claim_count", score.claim_count},
            {"true_count", score.true_count},
            {"score", optional_real(score.score)}};
}

json to_json(const ClaimStats& stats) {
    return {{"documents", stats.documents},
            {"sentences", stats.sentences},
            {"claims", stats.claims},
            {"zero_claim_rate", stats.zero_claim_rate},
            {"claims_per_response_mean", stats.claims_per_response_mean},
            {"claims_per_response_std", stats.claims_per_response_std},
            {"claims_per_sentence_mean", stats.claims_per_sentence_mean},
            {"claims_per_sentence_std", stats.claims_per_sentence_std},
            {"tokens_per_claim_mean", optional_real(stats.tokens_per_claim_mean)}};
}

json to_json(const VerifiableRates& rates) {
    return {{"verifiable_documents", rates.verifiable_documents},
            {"zero_claim_documents", rates.zero_claim_documents},
            {"verifiable_rate", optional_real(rates.verifiable_rate)},
            {"adjusted_rate", rates.adjusted_rate},
            {"penalization", optional_real(rates.penalization)}};
}

json to_json(const TaxonomyBreakdown& breakdown) {
    json rows = json::array();
    for (const auto& r : breakdown.rows) {
        rows.push_back({{"label", std::string(to_string(r.label))}, {"count", r.count}, {"percent", r.percent}});
    }
    return {{"total_claims", breakdown.total_claims}, {"rows", rows}};
}

json to_json(const NliJudgment& judgment) {
    return {{"claim_id", judgment.claim_id},
            {"span_index", judgment.span_index},
            {"span_label", judgment.span_label},
            {"entail_label", judgment.entail_label},
            {"entail_score", judgment.entail_score},
            {"parse_ok", judgment.parse_ok},
            {"raw_output", judgment.raw_output}};
}

json to_json(const AnnotationRecord& record) {
    return {{"claim_id", record.claim_id},
            {"annotator_id", record.annotator_id},
            {"label", std::string(to_string(record.label))}};
}

NliJudgment nli_judgment_from_json(const json& j) {
    if (!j.is_object()) {
        throw ValidationError("expected a JSON object");
    }
    NliJudgment out;
    out.claim_id = require_string(j, "claim_id");
    out.span_label = require_string(j, "span_label");
    out.entail_label = require_bool(j, "entail_label");
    out.parse_ok = require_bool(j, "parse_ok");
    const auto& score = require(j, "entail_score");
    if (!score.is_number() || score.get<double>() < 0.0 || score.get<double>() > 1.0) {
        throw ValidationError("entail_score: expected a number in [0, 1]");
    }
    out.entail_score = score.get<double>();
    if (auto it = j.find("span_index"); it != j.end()) {
        if (!it->is_number_unsigned()) {
            throw ValidationError("span_index: expected non-negative integer");
        }
        out.span_index = it->get<std::size_t>();
    }
    if (auto it = j.find("raw_output"); it != j.end() && it->is_string()) {
        out.raw_output = it->get<std::string>();
    }
    return out;
}

AnnotationRecord annotation_from_json(const json& j) {
    if (!j.is_object()) {
        throw ValidationError("expected a JSON object");
    }
    AnnotationRecord out;
    out.claim_id = require_string(j, "claim_id");
    out.annotator_id = require_string(j, "annotator_id");
    const auto label = require_string(j, "label");
    auto parsed = parse_taxonomy_label(label);
    if (!parsed) {
        throw ValidationError("label: unknown taxonomy label '" + label + "'");
    }
    if (*parsed == TaxonomyLabel::Omitted) {
        throw ValidationError("label: Omitted applies to a whole response, not a claim");
    }
    out.label = *parsed;
    return out;
}

std::vector<NliJudgment> read_nli_judgments(const std::filesystem::path& path) {
    std::vector<NliJudgment> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(nli_judgment_from_json(j)); });
    return out;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(annotation_from_json(j)); });
    return out;
}

std::string format_fixed2(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

std::string format_percent(double fraction) { return format_fixed2(100.0 * fraction) + "%"; }

namespace {

std::string percent_or_dash(const json& v) { return v.is_number() ? format_percent(v.get<double>()) : "—"; }
std::string fixed_or_dash(const json& v) { return v.is_number() ? format_fixed2(v.get<double>()) : "—"; }

} // namespace

std::string render_markdown(const json& report) {
    std::string md = "# Factuality report\n";

    if (auto it = report.find("dataset_factuality"); it != report.end() && !it->is_null()) {
        md += "\n## Factuality\n\n| Metric | Value |\n|---|---|\n";
        md += "| Factuality (per-response mean) | " + percent_or_dash(*it) + " |\n";
        if (auto m = report.find("dataset_factuality_micro"); m != report.end()) {
            md += "| Factuality (per-claim, secondary) | " + percent_or_dash(*m) + " |\n";
        }
        if (auto u = report.find("unparseable_verdict_rate"); u != report.end()) {
            md += "| Unparseable verdicts | " + percent_or_dash(*u) + " |\n";
        }
        if (auto c = report.find("counts"); c != report.end() && c->is_object()) {
            for (const auto& [key, value] : c->items()) {
                md += "| " + key + " | " + value.dump() + " |\n";
            }
        }
    }

    if (auto it = report.find("claim_stats"); it != report.end() && it->is_object()) {
        const auto& s = *it;
        md += "\n## Claim statistics\n\n";
        md += "| 0-claim rate | #claims/response | #claims/sentence | tokens/claim |\n|---|---|---|---|\n";
        md += "| " + percent_or_dash(s.value("zero_claim_rate", json())) + " | " +
              fixed_or_dash(s.value("claims_per_response_mean", json())) + " ± " +
              fixed_or_dash(s.value("claims_per_response_std", json())) + " | " +
              fixed_or_dash(s.value("claims_per_sentence_mean", json())) + " ± " +
              fixed_or_dash(s.value("claims_per_sentence_std", json())) + " | " +
              fixed_or_dash(s.value("tokens_per_claim_mean", json())) + " |\n";
    }

    if (auto it = report.find("verifiable_rates"); it != report.end() && it->is_object()) {
        const auto& v = *it;
        md += "\n## Claim verifiability\n\n";
        md += "| Verifiable Rate | Adjusted Verifiable Rate | Penalization |\n|---|---|---|\n";
        md += "| " + percent_or_dash(v.value("verifiable_rate", json())) + " | " +
              percent_or_dash(v.value("adjusted_rate", json())) + " | " +
              percent_or_dash(v.value("penalization", json())) + " |\n";
    }

    if (auto it = report.find("taxonomy"); it != report.end() && it->is_object()) {
        const auto& t = *it;
        md += "\n## Claim taxonomy\n\n| Label | Claims |\n|---|---|\n";
        for (const auto& row : t.value("rows", json::array())) {
            md += "| " + row.value("label", std::string()) + " | " + std::to_string(row.value("count", 0)) + " (" +
                  format_fixed2(row.value("percent", 0.0)) + "%) |\n";
        }
        md += "| Total | " + std::to_string(t.value("total_claims", 0)) + " |\n";
    }

    if (auto it = report.find("kappa"); it != report.end() && it->is_number()) {
        md += "\n## Agreement\n\n| Cohen's kappa |\n|---|\n| " + format_fixed2(it->get<double>()) + " |\n";
    }

    if (auto it = report.find("manifest"); it != report.end() && it->is_object()) {
        const auto& m = *it;
        md += "\n## Run\n\n| Field | Value |\n|---|---|\n";
        for (const char* key : {"run_id", "template_digest", "corpus_digest"}) {
            if (auto f = m.find(key); f != m.end() && f->is_string()) {
                md += std::string("| ") + key + " | `" + f->get<std::string>() + "` |\n";
            }
        }
        if (auto cfg = m.find("config"); cfg != m.end() && cfg->is_object()) {
            for (const auto& [key, value] : cfg->items()) {
                md += "| config." + key + " | " + (value.is_string() ? value.get<std::string>() : value.dump()) +
                      " |\n";
            }
        }
        if (auto so = m.find("stage_outputs"); so != m.end() && so->is_object()) {
            for (const auto& [stage, path] : so->items()) {
                md += "| output." + stage + " | " + (path.is_string() ? path.get<std::string>() : path.dump()) +
                      " |\n";
            }
        }
    }
    return md;
}

} // namespace factpipe
