#include "factpipe/metrics.hpp"

#include "factpipe/concurrency.hpp"
#include "factpipe/error.hpp"
#include "factpipe/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

namespace factpipe {

// Factuality -------------------------------------------------------------------

ResponseScore response_factuality(std::string document_id, std::span<const Verdict> verdicts) {
    ResponseScore out;
    out.document_id = std::move(document_id);
    out.claim_count = verdicts.size();
    for (const auto& v : verdicts) {
        if (v.value) {
            ++out.true_count;
        }
    }
    if (out.claim_count > 0) {
        out.score = static_cast<double>(out.true_count) / static_cast<double>(out.claim_count);
    }
    return out;
}

double dataset_factuality(std::span<const ResponseScore> scores) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : scores) {
        if (s.claim_count > 0) {
            sum += *s.score;
            ++n;
        }
    }
    if (n == 0) {
        throw EmptyDataset("no response has any claim");
    }
    return sum / static_cast<double>(n);
}

double dataset_factuality_micro(std::span<const ResponseScore> scores) {
    std::size_t claims = 0;
    std::size_t trues = 0;
    for (const auto& s : scores) {
        claims += s.claim_count;
        trues += s.true_count;
    }
    if (claims == 0) {
        throw EmptyDataset("no response has any claim");
    }
    return static_cast<double>(trues) / static_cast<double>(claims);
}

std::vector<ResponseScore> score_responses(std::span<const std::string> document_ids, std::span<const Claim> claims,
                                           std::span<const Verdict> verdicts) {
    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < document_ids.size(); ++i) {
        if (!doc_index.emplace(document_ids[i], i).second) {
            throw ValidationError("duplicate document id '" + document_ids[i] + "'");
        }
    }
    std::unordered_map<std::string, std::size_t> claim_doc;
    for (const auto& c : claims) {
        auto it = doc_index.find(c.document_id);
        if (it == doc_index.end()) {
            throw ValidationError("claim " + c.id + ": unknown document_id '" + c.document_id + "'");
        }
        if (!claim_doc.emplace(c.id, it->second).second) {
            throw ValidationError("duplicate claim id '" + c.id + "'");
        }
    }
    std::vector<std::vector<Verdict>> grouped(document_ids.size());
    std::set<std::string> seen;
    for (const auto& v : verdicts) {
        auto it = claim_doc.find(v.claim_id);
        if (it == claim_doc.end()) {
            throw ValidationError("verdict references unknown claim_id '" + v.claim_id + "'");
        }
        if (!seen.insert(v.claim_id).second) {
            throw ValidationError("more than one verdict for claim_id '" + v.claim_id + "'");
        }
        grouped[it->second].push_back(v);
    }
    std::vector<ResponseScore> out;
    out.reserve(document_ids.size());
    for (std::size_t i = 0; i < document_ids.size(); ++i) {
        out.push_back(response_factuality(document_ids[i], grouped[i]));
    }
    return out;
}

double unparseable_verdict_rate(std::span<const Verdict> verdicts) noexcept {
    if (verdicts.empty()) {
        return 0.0;
    }
    const auto bad = std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return !v.parse_ok; });
    return static_cast<double>(bad) / static_cast<double>(verdicts.size());
}

// Claim statistics ---------------------------------------------------------------

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) {
        return out;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() < 2) {
        return out;
    }
    double sq = 0.0;
    for (double v : values) {
        sq += (v - out.mean) * (v - out.mean);
    }
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
    return out;
}

ClaimStats claim_stats(std::span<const DocumentClaims> docs) {
    if (docs.empty()) {
        throw EmptyDataset("claim statistics need at least one response");
    }
    ClaimStats out;
    out.documents = docs.size();
    std::vector<double> per_response;
    std::vector<double> per_sentence;
    std::size_t zero = 0;
    std::size_t tokens = 0;
    for (const auto& d : docs) {
        std::size_t total = 0;
        for (auto n : d.claims_per_sentence) {
            per_sentence.push_back(static_cast<double>(n));
            total += n;
        }
        if (total == 0) {
            ++zero;
        }
        per_response.push_back(static_cast<double>(total));
        for (const auto& text : d.claim_texts) {
            tokens += count_tokens(text);
        }
        out.claims += d.claim_texts.size();
    }
    out.sentences = per_sentence.size();
    out.zero_claim_rate = static_cast<double>(zero) / static_cast<double>(docs.size());
    const auto r = mean_std(per_response);
    out.claims_per_response_mean = r.mean;
    out.claims_per_response_std = r.std;
    const auto s = mean_std(per_sentence);
    out.claims_per_sentence_mean = s.mean;
    out.claims_per_sentence_std = s.std;
    if (out.claims > 0) {
        out.tokens_per_claim_mean = static_cast<double>(tokens) / static_cast<double>(out.claims);
    }
    return out;
}

std::optional<DocumentClaims> summarize_decomposition(std::string document_id,
                                                      std::span<const DecompositionResult> units) {
    DocumentClaims out;
    out.document_id = std::move(document_id);
    for (const auto& u : units) {
        if (u.failed) {
            return std::nullopt;
        }
        out.claims_per_sentence.push_back(u.claims.size());
        for (const auto& c : u.claims) {
            out.claim_texts.push_back(c.text);
        }
    }
    return out;
}

// NLI ----------------------------------------------------------------------------

ChatRequest nli_prompt(std::string_view claim_text, std::string_view span_text, const RunConfig& config) {
    std::string user = "Does the premise entail this claim?\n\nPremise: {";
    user += span_text;
    user += "}\n\nClaim: {";
    user += claim_text;
    user += "}";
    return make_request(config, std::move(user), std::string(kNliSystemPrompt));
}

namespace {

// "Key: value" with emphasis markers removed; nullopt when the key differs.
std::optional<std::string> field_value(std::string_view line, std::string_view key) {
    std::string cleaned;
    for (char c : line) {
        if (c != '*' && c != '_' && c != '`' && c != '#') {
            cleaned.push_back(c);
        }
    }
    const auto body = trim(cleaned);
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) {
        return std::nullopt;
    }
    if (to_lower_ascii(trim(body.substr(0, colon))) != key) {
        return std::nullopt;
    }
    return std::string(trim(body.substr(colon + 1)));
}

std::optional<double> parse_score(std::string_view text) {
    // The prompt's own example ends in a period ("0.6.").
    while (!text.empty() && (text.back() == '.' || text.back() == ',')) {
        text.remove_suffix(1);
    }
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr == text.data() || trim(std::string_view(ptr, end - ptr)).size() != 0) {
        return std::nullopt;
    }
    if (!(value >= 0.0 && value <= 1.0)) {
        return std::nullopt;
    }
    return value;
}

} // namespace

ParsedNli parse_nli_output(std::string_view raw_output) noexcept {
    try {
        std::optional<bool> label;
        std::optional<double> score;
        bool bad = false;
        for (auto line : split_lines(raw_output)) {
            if (!label) {
                if (auto v = field_value(line, "label")) {
                    const auto word = to_lower_ascii(*v);
                    std::string_view w = word;
                    while (!w.empty() && (w.back() == '.' || w.back() == ',')) {
                        w.remove_suffix(1);
                    }
                    if (w == "true") {
                        label = true;
                    } else if (w == "false") {
                        label = false;
                    } else {
                        bad = true;
                    }
                    continue;
                }
            }
            if (!score) {
                if (auto v = field_value(line, "score")) {
                    score = parse_score(*v);
                    if (!score) {
                        bad = true;
                    }
                }
            }
        }
        if (bad || !label || !score) {
            return {};
        }
        return {*label, *score, true};
    } catch (...) {
        return {};
    }
}

NliJudgment judge_nli(std::string claim_id, std::string_view raw_output, double threshold) {
    NliJudgment j;
    j.claim_id = std::move(claim_id);
    const auto parsed = parse_nli_output(raw_output);
    j.parse_ok = parsed.parse_ok;
    j.entail_score = parsed.score;
    j.entail_label = parsed.parse_ok && parsed.label && parsed.score > threshold;
    j.raw_output = std::string(raw_output);
    return j;
}

NliJudgment nli_entail(const Claim& claim, std::string_view span_text, LlmClient& client) {
    const auto resp = client.cached_complete(nli_prompt(claim.text, span_text, client.config()));
    return judge_nli(claim.id, resp.text, client.config().nli_threshold);
}

bool has_verifiable_span(const Document& doc) noexcept {
    if (!doc.span_annotations) {
        return false;
    }
    return std::any_of(doc.span_annotations->begin(), doc.span_annotations->end(),
                       [](const SpanAnnotation& s) { return is_verifiable(s.label); });
}

std::vector<NliJudgment> nli_evaluate(std::span<const Document> docs, std::span<const Claim> claims,
                                      LlmClient& client) {
    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& d : docs) {
        by_id.emplace(d.id, &d);
    }
    struct Job {
        const Claim* claim;
        std::size_t span_index;
        SpanLabel label;
        std::string premise;
    };
    std::vector<Job> jobs;
    for (const auto& c : claims) {
        auto it = by_id.find(c.document_id);
        if (it == by_id.end()) {
            throw ValidationError("claim " + c.id + ": unknown document_id '" + c.document_id + "'");
        }
        const auto& doc = *it->second;
        if (!doc.span_annotations) {
            continue;
        }
        for (std::size_t s = 0; s < doc.span_annotations->size(); ++s) {
            const auto& span = (*doc.span_annotations)[s];
            if (is_verifiable(span.label)) {
                jobs.push_back({&c, s, span.label, utf8_substr(doc.response, span.char_start, span.char_end)});
            }
        }
    }
    std::vector<NliJudgment> out(jobs.size());
    parallel_for(jobs.size(), static_cast<std::size_t>(client.config().concurrency_limit), [&](std::size_t i) {
        const auto& job = jobs[i];
        auto j = nli_entail(*job.claim, job.premise, client);
        j.span_index = job.span_index;
        j.span_label = std::string(to_string(job.label));
        out[i] = std::move(j);
    });
    return out;
}

VerifiableRates verifiable_rates_from_fractions(std::span<const std::optional<double>> fractions) {
    if (fractions.empty()) {
        throw EmptyDataset("no response has a verifiable span");
    }
    VerifiableRates out;
    out.verifiable_documents = fractions.size();
    double sum = 0.0;
    std::size_t with_claims = 0;
    for (const auto& f : fractions) {
        if (f) {
            sum += *f;
            ++with_claims;
        } else {
            ++out.zero_claim_documents;
        }
    }
    // Written so that the adjusted rate reproduces the plain rate exactly when
    // no verifiable response lacks claims.
    out.adjusted_rate = (sum - static_cast<double>(out.zero_claim_documents)) / static_cast<double>(fractions.size());
    if (with_claims > 0) {
        out.verifiable_rate = sum / static_cast<double>(with_claims);
        out.penalization = *out.verifiable_rate - out.adjusted_rate;
    }
    return out;
}

VerifiableRates verifiable_rates(std::span<const Document> docs, std::span<const Claim> claims,
                                 std::span<const NliJudgment> judgments) {
    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        doc_index.emplace(docs[i].id, i);
    }
    std::unordered_map<std::string, bool> entailed;
    std::vector<std::vector<const Claim*>> per_doc(docs.size());
    for (const auto& c : claims) {
        auto it = doc_index.find(c.document_id);
        if (it == doc_index.end()) {
            throw ValidationError("claim " + c.id + ": unknown document_id '" + c.document_id + "'");
        }
        per_doc[it->second].push_back(&c);
        entailed.emplace(c.id, false);
    }
    for (const auto& j : judgments) {
        auto it = entailed.find(j.claim_id);
        if (it == entailed.end()) {
            throw ValidationError("judgment references unknown claim_id '" + j.claim_id + "'");
        }
        it->second = it->second || j.entail_label;
    }
    std::vector<std::optional<double>> fractions;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (!has_verifiable_span(docs[i])) {
            continue;
        }
        if (per_doc[i].empty()) {
            fractions.emplace_back();
            continue;
        }
        std::size_t yes = 0;
        for (const auto* c : per_doc[i]) {
            if (entailed.at(c->id)) {
                ++yes;
            }
        }
        fractions.emplace_back(static_cast<double>(yes) / static_cast<double>(per_doc[i].size()));
    }
    return verifiable_rates_from_fractions(fractions);
}

double adjusted_verifiable_rate(double verifiable_rate, double zero_claim_fraction) noexcept {
    return (1.0 - zero_claim_fraction) * verifiable_rate - zero_claim_fraction;
}

// Annotation agreement -----------------------------------------------------------

std::vector<std::string> validate_annotations(std::span<const AnnotationRecord> records) {
    std::vector<std::string> out;
    std::set<std::tuple<std::string, std::string, TaxonomyLabel>> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const auto where = "annotation " + std::to_string(i + 1) + ": ";
        if (r.claim_id.empty()) {
            out.push_back(where + "claim_id: empty");
        }
        if (r.annotator_id.empty()) {
            out.push_back(where + "annotator_id: empty");
        }
        if (r.label == TaxonomyLabel::Omitted) {
            out.push_back(where + "label: Omitted applies to a whole response, not a claim");
        }
        if (!seen.emplace(r.claim_id, r.annotator_id, r.label).second) {
            out.push_back(where + "duplicate (claim_id, annotator_id, label)");
        }
    }
    return out;
}

double kappa_from_pairs(std::span<const std::pair<int, int>> pairs) {
    if (pairs.empty()) {
        throw EmptyDataset("kappa needs at least one item");
    }
    std::map<int, double> marg_a;
    std::map<int, double> marg_b;
    double agree = 0.0;
    for (const auto& [a, b] : pairs) {
        marg_a[a] += 1.0;
        marg_b[b] += 1.0;
        if (a == b) {
            agree += 1.0;
        }
    }
    const double n = static_cast<double>(pairs.size());
    const double po = agree / n;
    double pe = 0.0;
    for (const auto& [label, count] : marg_a) {
        if (auto it = marg_b.find(label); it != marg_b.end()) {
            pe += (count / n) * (it->second / n);
        }
    }
    if (pe == 1.0) {
        return 1.0;
    }
    return (po - pe) / (1.0 - pe);
}

namespace {

using LabelSets = std::map<std::string, std::set<TaxonomyLabel>>;

LabelSets label_sets(std::span<const AnnotationRecord> records) {
    LabelSets out;
    for (const auto& r : records) {
        out[r.claim_id].insert(r.label);
    }
    return out;
}

void require_valid(std::span<const AnnotationRecord> records) {
    if (auto problems = validate_annotations(records); !problems.empty()) {
        throw ValidationError(problems.front());
    }
}

} // namespace

double cohens_kappa(std::span<const AnnotationRecord> records_a, std::span<const AnnotationRecord> records_b) {
    require_valid(records_a);
    require_valid(records_b);
    const auto a = label_sets(records_a);
    const auto b = label_sets(records_b);
    if (a.size() != b.size() ||
        !std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) { return x.first == y.first; })) {
        throw MismatchedClaimSets("the two annotators labeled different claim sets");
    }
    if (a.empty()) {
        throw EmptyDataset("no annotations");
    }
    const bool single = std::all_of(a.begin(), a.end(), [](const auto& e) { return e.second.size() == 1; }) &&
                        std::all_of(b.begin(), b.end(), [](const auto& e) { return e.second.size() == 1; });
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(a.size());
    if (single) {
        for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
            pairs.emplace_back(static_cast<int>(*ia->second.begin()), static_cast<int>(*ib->second.begin()));
        }
        return kappa_from_pairs(pairs);
    }
    std::set<TaxonomyLabel> used;
    for (const auto* sets : {&a, &b}) {
        for (const auto& [_, labels] : *sets) {
            used.insert(labels.begin(), labels.end());
        }
    }
    double sum = 0.0;
    for (auto label : used) {
        pairs.clear();
        for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
            pairs.emplace_back(ia->second.count(label) ? 1 : 0, ib->second.count(label) ? 1 : 0);
        }
        sum += kappa_from_pairs(pairs);
    }
    return sum / static_cast<double>(used.size());
}

const TaxonomyRow& TaxonomyBreakdown::row(TaxonomyLabel label) const {
    for (const auto& r : rows) {
        if (r.label == label) {
            return r;
        }
    }
    throw Error("taxonomy row missing");
}

TaxonomyBreakdown taxonomy_breakdown(std::span<const AnnotationRecord> records, Reconciliation reconciliation,
                                     const std::string& annotator_id) {
    require_valid(records);
    LabelSets reconciled;
    if (reconciliation == Reconciliation::Annotator) {
        for (const auto& r : records) {
            if (r.annotator_id == annotator_id) {
                reconciled[r.claim_id].insert(r.label);
            }
        }
    } else {
        std::map<std::string, std::map<std::string, std::set<TaxonomyLabel>>> by_claim;
        for (const auto& r : records) {
            by_claim[r.claim_id][r.annotator_id].insert(r.label);
        }
        for (const auto& [claim, per_annotator] : by_claim) {
            auto common = per_annotator.begin()->second;
            for (const auto& [_, labels] : per_annotator) {
                std::set<TaxonomyLabel> keep;
                std::set_intersection(common.begin(), common.end(), labels.begin(), labels.end(),
                                      std::inserter(keep, keep.begin()));
                common = std::move(keep);
            }
            reconciled[claim] = std::move(common);
        }
    }
    TaxonomyBreakdown out;
    out.total_claims = reconciled.size();
    for (auto label : kAllTaxonomyLabels) {
        TaxonomyRow row;
        row.label = label;
        for (const auto& [_, labels] : reconciled) {
            if (label == TaxonomyLabel::Valid) {
                if (labels.size() == 1 && *labels.begin() == TaxonomyLabel::Valid) {
                    ++row.count;
                }
            } else if (labels.count(label)) {
                ++row.count;
            }
        }
        if (out.total_claims > 0) {
            row.percent = 100.0 * static_cast<double>(row.count) / static_cast<double>(out.total_claims);
        }
        out.rows.push_back(row);
    }
    return out;
}

} // namespace factpipe
