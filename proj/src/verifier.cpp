#include "factpipe/verifier.hpp"

#include "factpipe/concurrency.hpp"
#include "factpipe/error.hpp"
#include "factpipe/log.hpp"
#include "factpipe/text.hpp"

namespace factpipe {

ChatRequest internal_prompt(std::string_view claim_text, const RunConfig& config) {
    std::string user = "Using your own knowledge, answer the question.\n\nInput:{";
    user += claim_text;
    user += "} True or False?\n\nOutput:";
    return make_request(config, std::move(user), std::string(kInternalSystemPrompt));
}

ChatRequest context_prompt(std::string_view claim_text, std::string_view context, const RunConfig& config) {
    std::string user = "Answer the question based on the given context.\n\n{";
    user += context;
    user += "}\n\nInput: {";
    user += claim_text;
    user += "} True or False?\n\nOutput:";
    return make_request(config, std::move(user));
}

bool is_verdict_letter(char32_t cp) noexcept {
    if (cp < 0x80) {
        return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (cp >= 0xC0 && cp <= 0x24F) {
        return cp != 0xD7 && cp != 0xF7;
    }
    if (cp == 0xAA || cp == 0xB5 || cp == 0xBA) {
        return true;
    }
    struct Range {
        char32_t lo, hi;
    };
    static constexpr Range kLetters[] = {
        {0x250, 0x2AF},   // IPA
        {0x370, 0x3FF},   // Greek
        {0x400, 0x52F},   // Cyrillic
        {0x531, 0x587},   // Armenian
        {0x5D0, 0x5EA},   // Hebrew
        {0x620, 0x64A},   // Arabic
        {0x904, 0x939},   // Devanagari
        {0xE01, 0xE30},   // Thai
        {0x1E00, 0x1FFF}, // Latin Extended Additional, Greek Extended
        {0x3041, 0x3096}, // Hiragana
        {0x30A1, 0x30FA}, // Katakana
        {0x4E00, 0x9FFF}, // CJK
        {0xAC00, 0xD7A3}, // Hangul
    };
    for (const auto& r : kLetters) {
        if (cp >= r.lo && cp <= r.hi) {
            return true;
        }
    }
    return false;
}

ParsedVerdict parse_verdict(std::string_view raw_output) noexcept {
    try {
        const auto cps = decode_utf8(raw_output);
        std::size_t i = 0;
        while (i < cps.size() && !is_verdict_letter(cps[i])) {
            ++i;
        }
        std::string token;
        for (; i < cps.size() && is_verdict_letter(cps[i]); ++i) {
            if (cps[i] >= 0x80 || token.size() > 5) {
                return {};
            }
            token.push_back(static_cast<char>(cps[i] >= 'A' && cps[i] <= 'Z' ? cps[i] - 'A' + 'a' : cps[i]));
        }
        if (token == "true") {
            return {true, true};
        }
        if (token == "false") {
            return {false, true};
        }
        return {};
    } catch (...) {
        return {};
    }
}

namespace {

Verdict finish(const Claim& claim, Strategy strategy, std::string raw) {
    Verdict v;
    v.claim_id = claim.id;
    v.strategy = strategy;
    const auto parsed = parse_verdict(raw);
    v.value = parsed.value;
    v.parse_ok = parsed.parse_ok;
    v.raw_output = std::move(raw);
    return v;
}

void require_text(const Claim& claim) {
    if (trim(claim.text).empty()) {
        throw ValidationError("claim " + claim.id + ": text is empty");
    }
}

} // namespace

Verdict verify_internal(const Claim& claim, LlmClient& client) {
    require_text(claim);
    auto resp = client.cached_complete(internal_prompt(claim.text, client.config()));
    return finish(claim, Strategy::Internal, std::move(resp.text));
}

Verdict verify_with_reference(const Claim& claim, const std::optional<std::string>& reference_text,
                              LlmClient& client) {
    require_text(claim);
    if (!reference_text || trim(*reference_text).empty()) {
        throw MissingReference("document " + claim.document_id + " has no reference_response");
    }
    auto resp = client.cached_complete(context_prompt(claim.text, *reference_text, client.config()));
    return finish(claim, Strategy::Reference, std::move(resp.text));
}

Verdict verify_with_retrieval(const Claim& claim, const CorpusIndex& index, std::size_t k, LlmClient& client,
                              const std::optional<std::vector<double>>& query_embedding) {
    require_text(claim);
    if (index.empty()) {
        throw ValidationError("retrieval corpus is empty");
    }
    if (k == 0) {
        throw ValidationError("k must be >= 1");
    }
    RetrievalQuery query{claim.text, query_embedding};
    const auto ranked = retrieve_topk(index, query, k);
    const auto context = build_context(ranked, index);
    auto resp = client.cached_complete(context_prompt(claim.text, context, client.config()));
    auto v = finish(claim, Strategy::Retrieval, std::move(resp.text));
    std::vector<std::string> ids;
    ids.reserve(ranked.size());
    for (const auto& s : ranked) {
        ids.push_back(s.snippet_id);
    }
    v.retrieved_snippet_ids = std::move(ids);
    return v;
}

std::vector<VerificationOutcome> verify_claims(std::span<const Claim> claims, const VerifierSetup& setup,
                                               LlmClient& client) {
    if (setup.strategy == Strategy::Retrieval && (setup.index == nullptr || setup.index->empty())) {
        throw ValidationError("retrieval strategy requires a non-empty corpus");
    }
    if (setup.strategy == Strategy::Reference && setup.references == nullptr) {
        throw MissingReference("reference strategy requires a dataset with reference_response");
    }
    std::vector<VerificationOutcome> out(claims.size());
    parallel_for(claims.size(), static_cast<std::size_t>(client.config().concurrency_limit), [&](std::size_t i) {
        const auto& claim = claims[i];
        auto& slot = out[i];
        slot.claim_id = claim.id;
        try {
            switch (setup.strategy) {
            case Strategy::Internal:
                slot.verdict = verify_internal(claim, client);
                break;
            case Strategy::Reference: {
                auto it = setup.references->find(claim.document_id);
                if (it == setup.references->end()) {
                    throw ValidationError("claim " + claim.id + ": unknown document_id '" + claim.document_id + "'");
                }
                slot.verdict = verify_with_reference(claim, it->second, client);
                break;
            }
            case Strategy::Retrieval: {
                std::optional<std::vector<double>> embedding;
                if (setup.query_embeddings != nullptr) {
                    if (auto it = setup.query_embeddings->find(claim.id); it != setup.query_embeddings->end()) {
                        embedding = it->second;
                    }
                }
                if (!embedding && setup.embed_queries && setup.index->has_embeddings()) {
                    embedding = client.embed(claim.text);
                }
                slot.verdict = verify_with_retrieval(claim, *setup.index, setup.k, client, embedding);
                break;
            }
            }
        } catch (const TransientExhausted& e) {
            slot.failed = true;
            slot.error = e.what();
            log_warn("claim " + claim.id + " failed and is excluded from scores: " + e.what());
        }
    });
    return out;
}

} // namespace factpipe
