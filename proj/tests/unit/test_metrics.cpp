#include <doctest.h>

#include "factpipe/error.hpp"
#include "factpipe/metrics.hpp"
#include "factpipe/report.hpp"

#include "fakes.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace factpipe;

namespace {

Verdict verdict(std::string claim_id, bool value) {
    Verdict v;
    v.claim_id = std::move(claim_id);
    v.value = value;
    v.parse_ok = true;
    return v;
}

Claim claim(std::string id, std::string doc, std::string text = "x") {
    Claim c;
    c.id = std::move(id);
    c.document_id = std::move(doc);
    c.text = std::move(text);
    return c;
}

AnnotationRecord ann(std::string claim_id, std::string who, TaxonomyLabel label) {
    return {std::move(claim_id), std::move(who), label};
}

Document spanned(std::string id, std::vector<SpanAnnotation> spans) {
    Document d;
    d.id = std::move(id);
    d.question = "q";
    d.response = "Rest a lot. I had this too.";
    d.span_annotations = std::move(spans);
    return d;
}

} // namespace

TEST_CASE("per-response factuality") {
    const std::vector<Verdict> v{verdict("a", true), verdict("b", true), verdict("c", false)};
    const auto s = response_factuality("d", v);
    CHECK(s.claim_count == 3);
    CHECK(s.true_count == 2);
    REQUIRE(s.score.has_value());
    CHECK(*s.score == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_FALSE(response_factuality("d", {}).score.has_value());
    std::vector<Verdict> seven(7, verdict("a", true));
    CHECK(*response_factuality("d", seven).score == 1.0);
}

TEST_CASE("zero-claim responses are excluded from the dataset mean") {
    const std::vector<ResponseScore> scores{{"a", 2, 2, 1.0}, {"b", 2, 1, 0.5}, {"c", 0, 0, std::nullopt}};
    CHECK(dataset_factuality(scores) == 0.75);
    CHECK(dataset_factuality_micro(scores) == 0.75);
    const std::vector<ResponseScore> uneven{{"a", 1, 1, 1.0}, {"b", 3, 0, 0.0}};
    CHECK(dataset_factuality(uneven) == 0.5);
    CHECK(dataset_factuality_micro(uneven) == 0.25);
    const std::vector<ResponseScore> empty{{"c", 0, 0, std::nullopt}};
    CHECK_THROWS_AS((void)dataset_factuality(empty), EmptyDataset);
    CHECK_THROWS_AS((void)dataset_factuality_micro(empty), EmptyDataset);
}

TEST_CASE("score_responses joins verdicts through claims") {
    const std::vector<std::string> ids{"d1", "d2", "d3"};
    const std::vector<Claim> claims{claim("c1", "d1"), claim("c2", "d1"), claim("c3", "d3")};
    const std::vector<Verdict> verdicts{verdict("c1", true), verdict("c2", false), verdict("c3", true)};
    const auto scores = score_responses(ids, claims, verdicts);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].score == 0.5);
    CHECK_FALSE(scores[1].score.has_value());
    CHECK(scores[2].score == 1.0);
    CHECK(dataset_factuality(scores) == 0.75);

    const std::vector<Verdict> dangling{verdict("c9", true)};
    CHECK_THROWS_AS((void)score_responses(ids, claims, dangling), ValidationError);
    const std::vector<Verdict> twice{verdict("c1", true), verdict("c1", false)};
    CHECK_THROWS_AS((void)score_responses(ids, claims, twice), ValidationError);
    const std::vector<Claim> orphan{claim("c1", "zz")};
    CHECK_THROWS_AS((void)score_responses(ids, orphan, {}), ValidationError);
}

TEST_CASE("unparseable verdict rate") {
    std::vector<Verdict> v{verdict("a", true), verdict("b", false), verdict("c", false)};
    v[2].parse_ok = false;
    CHECK(unparseable_verdict_rate(v) == doctest::Approx(1.0 / 3.0));
    CHECK(unparseable_verdict_rate({}) == 0.0);
}

TEST_CASE("dataset factuality matches the oracle on random fixtures") {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 50; ++round) {
        std::vector<std::vector<bool>> truth(1 + rng() % 300);
        std::vector<ResponseScore> scores;
        for (std::size_t d = 0; d < truth.size(); ++d) {
            truth[d].resize(rng() % 4 == 0 ? 0 : rng() % 40);
            std::vector<Verdict> v;
            for (std::size_t i = 0; i < truth[d].size(); ++i) {
                truth[d][i] = rng() % 3 != 0;
                v.push_back(verdict("c" + std::to_string(i), truth[d][i]));
            }
            scores.push_back(response_factuality("d" + std::to_string(d), v));
        }
        const auto want = fptest::oracle::macro_factuality(truth);
        if (!want) {
            CHECK_THROWS_AS((void)dataset_factuality(scores), EmptyDataset);
        } else {
            CHECK(std::abs(dataset_factuality(scores) - *want) <= 1e-12);
        }
    }
}

TEST_CASE("claim statistics") {
    const std::vector<DocumentClaims> docs{{"a", {1, 2}, {"one two", "three", "four five six"}},
                                           {"b", {0}, {}},
                                           {"c", {3}, {"x", "y", "z"}}};
    const auto s = claim_stats(docs);
    CHECK(s.documents == 3);
    CHECK(s.sentences == 4);
    CHECK(s.claims == 6);
    CHECK(s.zero_claim_rate == doctest::Approx(1.0 / 3.0));
    CHECK(s.claims_per_response_mean == 2.0);
    CHECK(s.claims_per_response_std == doctest::Approx(std::sqrt(3.0)));
    CHECK(s.claims_per_sentence_mean == 1.5);
    REQUIRE(s.tokens_per_claim_mean.has_value());
    CHECK(*s.tokens_per_claim_mean == doctest::Approx(9.0 / 6.0));

    const std::vector<DocumentClaims> flat{{"a", {2, 2}, {"a", "b", "c", "d"}}};
    const auto f = claim_stats(flat);
    CHECK(f.claims_per_sentence_mean == 2.0);
    CHECK(f.claims_per_sentence_std == 0.0);
    CHECK(f.claims_per_response_std == 0.0);
    const std::vector<DocumentClaims> none{{"a", {0}, {}}};
    CHECK_FALSE(claim_stats(none).tokens_per_claim_mean.has_value());
    CHECK_THROWS_AS((void)claim_stats(std::span<const DocumentClaims>{}), EmptyDataset);
}

TEST_CASE("failed decompositions are summarized as absent") {
    std::vector<DecompositionResult> units(2);
    units[0].claims = {claim("a", "d", "first")};
    CHECK(summarize_decomposition("d", units)->claims_per_sentence == std::vector<std::size_t>{1, 0});
    units[1].failed = true;
    CHECK_FALSE(summarize_decomposition("d", units).has_value());
}

TEST_CASE("NLI prompt and output parsing") {
    RunConfig config;
    const auto req = nli_prompt("Rest helps.", "Rest a lot.", config);
    CHECK(req.user_prompt == "Does the premise entail this claim?\n\nPremise: {Rest a lot.}\n\nClaim: {Rest helps.}");
    CHECK(req.system_prompt == std::string(kNliSystemPrompt));

    CHECK(judge_nli("c", "Label: True\nScore: 0.95", 0.8).entail_label);
    CHECK_FALSE(judge_nli("c", "Label: True\nScore: 0.8", 0.8).entail_label);
    CHECK(judge_nli("c", "Label: True\nScore: 0.80001", 0.8).entail_label);
    CHECK_FALSE(judge_nli("c", "Label: False\nScore: 0.9", 0.8).entail_label);
    const auto md = judge_nli("c", "**Label:** true\n\n**Score:** 0.9.", 0.8);
    CHECK(md.parse_ok);
    CHECK(md.entail_label);
    CHECK(md.entail_score == 0.9);
    CHECK_FALSE(judge_nli("c", "Label: Maybe\nScore: 0.9", 0.8).parse_ok);
    CHECK_FALSE(judge_nli("c", "Label: True\nScore: 1.5", 0.8).parse_ok);
    CHECK_FALSE(judge_nli("c", "Label: True", 0.8).parse_ok);
    CHECK_FALSE(judge_nli("c", "Label: True\nScore: high", 0.8).entail_label);
    CHECK(parse_nli_output("  label :  FALSE \n score: 0").parse_ok);
}

TEST_CASE("verifiable rates: hand examples") {
    const std::vector<std::optional<double>> two{1.0, std::nullopt};
    const auto r = verifiable_rates_from_fractions(two);
    CHECK(r.verifiable_rate == 1.0);
    CHECK(r.adjusted_rate == 0.0);
    CHECK(r.penalization == 1.0);

    const std::vector<std::optional<double>> none_zero{0.5, 0.7009, 0.6018};
    const auto f = verifiable_rates_from_fractions(none_zero);
    CHECK(f.adjusted_rate == *f.verifiable_rate);
    CHECK(*f.penalization == 0.0);

    const double p0 = 0.34720 / 1.8220;
    const double adjusted = adjusted_verifiable_rate(0.8220, p0);
    CHECK(std::abs(adjusted - 0.4748) <= 0.0005);
    CHECK(std::abs((0.8220 - adjusted) - 0.3472) <= 0.0005);
    CHECK(adjusted_verifiable_rate(0.6009, 0.0) == 0.6009);

    const std::vector<std::optional<double>> all_zero{std::nullopt, std::nullopt};
    const auto z = verifiable_rates_from_fractions(all_zero);
    CHECK_FALSE(z.verifiable_rate.has_value());
    CHECK(z.adjusted_rate == -1.0);
    CHECK_THROWS_AS((void)verifiable_rates_from_fractions({}), EmptyDataset);
}

TEST_CASE("verifiable rates from documents and judgments") {
    const std::vector<Document> docs{
        spanned("v1", {{0, 11, SpanLabel::Suggestion}}),
        spanned("v2", {{0, 11, SpanLabel::Cause}, {12, 27, SpanLabel::Experience}}),
        spanned("x", {{12, 27, SpanLabel::Experience}}),
    };
    const std::vector<Claim> claims{claim("v1#0", "v1"), claim("v1#1", "v1"), claim("x#0", "x")};
    NliJudgment yes;
    yes.claim_id = "v1#0";
    yes.entail_label = true;
    NliJudgment no = yes;
    no.claim_id = "v1#1";
    no.entail_label = false;
    const std::vector<NliJudgment> judgments{yes, no};
    const auto r = verifiable_rates(docs, claims, judgments);
    CHECK(r.verifiable_documents == 2);
    CHECK(r.zero_claim_documents == 1);
    CHECK(r.verifiable_rate == 0.5);
    CHECK(r.adjusted_rate == (0.5 - 1.0) / 2.0);

    NliJudgment stray = yes;
    stray.claim_id = "nope";
    const std::vector<NliJudgment> bad{stray};
    CHECK_THROWS_AS((void)verifiable_rates(docs, claims, bad), ValidationError);
    CHECK_FALSE(has_verifiable_span(docs[2]));
}

TEST_CASE("verifiable rates match the oracle on random fixtures") {
    std::mt19937_64 rng(9);
    for (int round = 0; round < 50; ++round) {
        std::vector<std::optional<double>> fractions(1 + rng() % 500);
        for (auto& f : fractions) {
            if (rng() % 5 != 0) {
                const int n = 1 + static_cast<int>(rng() % 20);
                f = static_cast<double>(rng() % (n + 1)) / n;
            }
        }
        const auto got = verifiable_rates_from_fractions(fractions);
        const auto want = fptest::oracle::rates(fractions);
        CHECK(std::abs(got.adjusted_rate - want.adjusted) <= 1e-12);
        CHECK(got.verifiable_rate.has_value() == want.verifiable.has_value());
        if (want.verifiable) {
            CHECK(std::abs(*got.verifiable_rate - *want.verifiable) <= 1e-12);
        }
    }
}

TEST_CASE("NLI evaluation walks verifiable spans in order") {
    fptest::TempDir dir;
    auto config = fptest::test_config(dir / "cache");
    config.endpoint_url = "http://stub.invalid";
    auto transport = fptest::ScriptedTransport::answering([](const std::string& user, const std::string&) {
        return user.find("{Rest a lot.}") != std::string::npos ? "Label: True\nScore: 0.9" : "Label: False\nScore: 0.1";
    });
    LlmClient client(config, transport);
    const std::vector<Document> docs{
        spanned("v", {{0, 11, SpanLabel::Suggestion}, {12, 27, SpanLabel::Experience}, {12, 27, SpanLabel::Information}})};
    const std::vector<Claim> claims{claim("v#0", "v", "Rest helps."), claim("v#1", "v", "Other.")};
    const auto out = nli_evaluate(docs, claims, client);
    REQUIRE(out.size() == 4);
    CHECK(out[0].claim_id == "v#0");
    CHECK(out[0].span_index == 0);
    CHECK(out[0].span_label == "Suggestion");
    CHECK(out[0].entail_label);
    CHECK(out[1].span_index == 2);
    CHECK(out[1].span_label == "Information");
    CHECK_FALSE(out[1].entail_label);
    CHECK(out[2].claim_id == "v#1");
    const auto rates = verifiable_rates(docs, claims, out);
    CHECK(rates.verifiable_rate == 1.0);
}

TEST_CASE("kappa hand cases") {
    std::vector<AnnotationRecord> a, b;
    for (int i = 0; i < 4; ++i) {
        const auto id = "c" + std::to_string(i);
        a.push_back(ann(id, "A", TaxonomyLabel::Valid));
        b.push_back(ann(id, "B", i < 2 ? TaxonomyLabel::Valid : TaxonomyLabel::Redundant));
    }
    CHECK(std::abs(cohens_kappa(a, b)) <= 1e-12);

    std::vector<AnnotationRecord> same;
    for (int i = 0; i < 6; ++i) {
        same.push_back(ann("c" + std::to_string(i), "A", i % 2 ? TaxonomyLabel::Valid : TaxonomyLabel::Hallucinated));
    }
    CHECK(cohens_kappa(same, same) == 1.0);

    // Balanced p_o = p_e = 0.5 between two binary annotators.
    const std::vector<std::pair<int, int>> pairs{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    CHECK(std::abs(kappa_from_pairs(pairs)) <= 1e-12);

    std::vector<AnnotationRecord> other{ann("zz", "B", TaxonomyLabel::Valid)};
    CHECK_THROWS_AS((void)cohens_kappa(a, other), MismatchedClaimSets);

    std::vector<AnnotationRecord> omitted{ann("c0", "A", TaxonomyLabel::Omitted)};
    CHECK_FALSE(validate_annotations(omitted).empty());
    CHECK_THROWS_AS((void)cohens_kappa(omitted, omitted), ValidationError);
}

TEST_CASE("multi-label kappa is the mean of per-label binary kappas") {
    const std::vector<AnnotationRecord> a{ann("1", "A", TaxonomyLabel::Incomplete), ann("1", "A", TaxonomyLabel::Redundant),
                                          ann("2", "A", TaxonomyLabel::Valid), ann("3", "A", TaxonomyLabel::Redundant)};
    const std::vector<AnnotationRecord> b{ann("1", "B", TaxonomyLabel::Incomplete), ann("2", "B", TaxonomyLabel::Valid),
                                          ann("3", "B", TaxonomyLabel::Valid)};
    // Incomplete: A 1,0,0 B 1,0,0; Redundant: A 1,0,1 B 0,0,0; Valid: A 0,1,0 B 0,1,1.
    const double k_inc = fptest::oracle::kappa({1, 0, 0}, {1, 0, 0});
    const double k_red = fptest::oracle::kappa({1, 0, 1}, {0, 0, 0});
    const double k_val = fptest::oracle::kappa({0, 1, 0}, {0, 1, 1});
    CHECK(std::abs(cohens_kappa(a, b) - (k_inc + k_red + k_val) / 3.0) <= 1e-12);
}

TEST_CASE("kappa matches the oracle on random single-label fixtures") {
    std::mt19937_64 rng(21);
    for (int round = 0; round < 50; ++round) {
        const std::size_t n = 2 + rng() % 300;
        std::vector<AnnotationRecord> a, b;
        std::vector<int> la, lb;
        for (std::size_t i = 0; i < n; ++i) {
            const int x = static_cast<int>(rng() % 3), y = rng() % 2 ? x : static_cast<int>(rng() % 3);
            const auto id = "c" + std::to_string(i);
            const TaxonomyLabel labels[] = {TaxonomyLabel::Valid, TaxonomyLabel::Redundant, TaxonomyLabel::Incomplete};
            a.push_back(ann(id, "A", labels[x]));
            b.push_back(ann(id, "B", labels[y]));
            la.push_back(x);
            lb.push_back(y);
        }
        CHECK(std::abs(cohens_kappa(a, b) - fptest::oracle::kappa(la, lb)) <= 1e-12);
    }
}

TEST_CASE("taxonomy breakdown") {
    std::vector<AnnotationRecord> records;
    for (int i = 0; i < 86; ++i) {
        const auto id = "c" + std::to_string(i);
        if (i < 64) {
            records.push_back(ann(id, "A", TaxonomyLabel::Valid));
        } else if (i < 80) {
            records.push_back(ann(id, "A", TaxonomyLabel::Incomplete));
        } else {
            records.push_back(ann(id, "A", TaxonomyLabel::Unverifiable));
            records.push_back(ann(id, "A", TaxonomyLabel::Redundant));
        }
    }
    const auto t = taxonomy_breakdown(records, Reconciliation::Annotator, "A");
    CHECK(t.total_claims == 86);
    CHECK(t.row(TaxonomyLabel::Valid).count == 64);
    CHECK(format_fixed2(t.row(TaxonomyLabel::Valid).percent) == "74.42");
    CHECK(std::abs(t.row(TaxonomyLabel::Valid).percent - 74.4) < 0.05);
    CHECK(t.row(TaxonomyLabel::Redundant).count == 6);
    CHECK(t.row(TaxonomyLabel::Unverifiable).count == 6);
    CHECK(t.row(TaxonomyLabel::Omitted).count == 0);
    REQUIRE(t.rows.size() == std::size(kAllTaxonomyLabels));
    CHECK(t.rows.front().label == TaxonomyLabel::Valid);

    const std::vector<AnnotationRecord> two{ann("1", "A", TaxonomyLabel::Incomplete), ann("1", "A", TaxonomyLabel::Redundant),
                                            ann("1", "B", TaxonomyLabel::Incomplete), ann("2", "A", TaxonomyLabel::Valid),
                                            ann("2", "B", TaxonomyLabel::Valid)};
    const auto both = taxonomy_breakdown(two, Reconciliation::Intersection);
    CHECK(both.total_claims == 2);
    CHECK(both.row(TaxonomyLabel::Incomplete).count == 1);
    CHECK(both.row(TaxonomyLabel::Redundant).count == 0);
    CHECK(both.row(TaxonomyLabel::Valid).count == 1);
    const auto only_a = taxonomy_breakdown(two, Reconciliation::Annotator, "A");
    CHECK(only_a.row(TaxonomyLabel::Redundant).count == 1);
    CHECK(only_a.row(TaxonomyLabel::Incomplete).percent + only_a.row(TaxonomyLabel::Redundant).percent +
              only_a.row(TaxonomyLabel::Valid).percent == doctest::Approx(150.0));

    std::vector<AnnotationRecord> all_valid;
    for (int i = 0; i < 10; ++i) all_valid.push_back(ann("c" + std::to_string(i), "A", TaxonomyLabel::Valid));
    const auto v = taxonomy_breakdown(all_valid, Reconciliation::Annotator, "A");
    CHECK(v.row(TaxonomyLabel::Valid).percent == 100.0);
}

TEST_CASE("report rendering") {
    json report{{"dataset_factuality", 1.0}, {"dataset_factuality_micro", 1.0}, {"unparseable_verdict_rate", 0.0},
                {"verifiable_rates", to_json(VerifiableRates{2, 1, 1.0, 0.0, 1.0})}};
    const auto md = render_markdown(report);
    CHECK(md.find("100.00%") != std::string::npos);
    CHECK(md.find("| Verifiable Rate | Adjusted Verifiable Rate | Penalization |") != std::string::npos);
    CHECK(md.find("| 100.00% | 0.00% | 100.00% |") != std::string::npos);
    CHECK(format_percent(0.74418604651) == "74.42%");
    CHECK(format_fixed2(-0.004) == "-0.00");
}
