#include <doctest.h>

#include "factpipe/error.hpp"
#include "factpipe/verifier.hpp"

#include "fakes.hpp"
#include "fixtures.hpp"

#include <random>

using namespace factpipe;

namespace {

Claim claim(std::string id, std::string doc, std::string text) {
    Claim c;
    c.id = std::move(id);
    c.document_id = std::move(doc);
    c.text = std::move(text);
    return c;
}

struct Harness {
    fptest::TempDir dir;
    RunConfig config;
    std::shared_ptr<fptest::ScriptedTransport> transport;
    std::unique_ptr<LlmClient> client;

    explicit Harness(std::shared_ptr<fptest::ScriptedTransport> t) : transport(std::move(t)) {
        config = fptest::test_config(dir / "cache");
        config.endpoint_url = "http://stub.invalid";
        client = std::make_unique<LlmClient>(config, transport);
    }

    [[nodiscard]] std::string last_user() const {
        const auto body = json::parse(transport->bodies().back());
        return body["messages"].back()["content"].get<std::string>();
    }
};

} // namespace

TEST_CASE("internal-knowledge prompt is byte-exact") {
    RunConfig config;
    const auto req = internal_prompt("Your doctor wanted to clarify a few things.", config);
    CHECK(req.user_prompt == "Using your own knowledge, answer the question.\n\nInput:{Your doctor wanted to clarify a "
                             "few things.} True or False?\n\nOutput:");
    REQUIRE(req.system_prompt.has_value());
    CHECK(*req.system_prompt ==
          "You are an assistant who verifies whether a claim from a medical response is True. You should rely "
          "exclusively on your own knowledge and always output \"True\" or \"False\" first. If there is not enough "
          "context or you are unable to verify the claim, then output \"False\".");
    CHECK(req.model_name == config.model_name);
}

TEST_CASE("context prompt is byte-exact and has no system part") {
    RunConfig config;
    const std::string context =
        "What tests are you looking for? I think it will depend on what you are asking for. If it's some rare or "
        "even uncommon, esoteric study, you're better off seeing a specialist; your PCP may not feel comfortable "
        "ordering a test or interpreting it.";
    const auto req = context_prompt("They may recommend that you see a specialist.", context, config);
    CHECK(req.user_prompt == "Answer the question based on the given context.\n\n{" + context +
                                 "}\n\nInput: {They may recommend that you see a specialist.} True or False?\n\n"
                                 "Output:");
    CHECK_FALSE(req.system_prompt.has_value());
}

TEST_CASE("verdict parsing looks at the first word only") {
    CHECK(parse_verdict("True") == ParsedVerdict{true, true});
    CHECK(parse_verdict("  **TRUE**, because") == ParsedVerdict{true, true});
    CHECK(parse_verdict("false.") == ParsedVerdict{false, true});
    CHECK(parse_verdict("\"False\" - the claim") == ParsedVerdict{false, true});
    CHECK(parse_verdict("1. True") == ParsedVerdict{true, true});
    CHECK(parse_verdict("The answer is True") == ParsedVerdict{false, false});
    CHECK(parse_verdict("Truely") == ParsedVerdict{false, false});
    CHECK(parse_verdict("Truest") == ParsedVerdict{false, false});
    CHECK(parse_verdict("untrue") == ParsedVerdict{false, false});
    CHECK(parse_verdict("") == ParsedVerdict{false, false});
    CHECK(parse_verdict("...!") == ParsedVerdict{false, false});
    CHECK(parse_verdict("I cannot say.") == ParsedVerdict{false, false});
    CHECK(parse_verdict("Tru\xC3\xA9") == ParsedVerdict{false, false});
    CHECK(parse_verdict("\xD0\x94\xD0\xB0 True") == ParsedVerdict{false, false});
    CHECK(parse_verdict("True\xE2\x80\x94yes") == ParsedVerdict{true, true});
    CHECK(parse_verdict("\xFF\xFE True") == ParsedVerdict{true, true});
    CHECK(parse_verdict(std::string("\0True", 5)) == ParsedVerdict{true, true});
}

TEST_CASE("verdict parsing never throws on random bytes") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        std::string s(rng() % 24, '\0');
        for (auto& c : s) c = static_cast<char>(rng());
        const auto p = parse_verdict(s);
        if (!p.parse_ok) {
            CHECK_FALSE(p.value);
        }
    }
}

TEST_CASE("internal strategy sends only the claim") {
    Harness h(fptest::ScriptedTransport::answering([](const std::string&, const std::string&) { return "True."; }));
    const auto v = verify_internal(claim("d#s0#c0", "d", "Aspirin thins blood."), *h.client);
    CHECK(v.value);
    CHECK(v.parse_ok);
    CHECK(v.strategy == Strategy::Internal);
    CHECK(v.raw_output == "True.");
    CHECK_FALSE(v.retrieved_snippet_ids.has_value());
    CHECK(validate_verdict(v).empty());
    CHECK(h.last_user().find("Aspirin thins blood.") != std::string::npos);
    CHECK_THROWS_AS((void)verify_internal(claim("x", "d", "  "), *h.client), ValidationError);
}

TEST_CASE("reference strategy uses the reference text and requires it") {
    Harness h(fptest::ScriptedTransport::answering([](const std::string&, const std::string&) { return "False"; }));
    const auto c = claim("d#s0#c0", "d", "Rest helps.");
    const auto v = verify_with_reference(c, std::string("Doctor says rest."), *h.client);
    CHECK_FALSE(v.value);
    CHECK(v.parse_ok);
    CHECK(v.strategy == Strategy::Reference);
    CHECK(h.last_user().find("{Doctor says rest.}") != std::string::npos);
    CHECK_THROWS_AS((void)verify_with_reference(c, std::nullopt, *h.client), MissingReference);
    CHECK_THROWS_AS((void)verify_with_reference(c, std::string(" \n"), *h.client), MissingReference);
}

TEST_CASE("retrieval strategy records provenance in rank order") {
    Harness h(fptest::ScriptedTransport::answering([](const std::string&, const std::string&) { return "True"; }));
    const auto index = CorpusIndex::build(fptest::replay_corpus());
    const auto c = claim("d#s0#c0", "d", "Ibuprofen reduces inflammation and fever.");
    const auto v5 = verify_with_retrieval(c, index, 5, *h.client);
    const auto expected = retrieve_topk(index, {c.text, std::nullopt}, 5);
    REQUIRE(v5.retrieved_snippet_ids.has_value());
    REQUIRE(v5.retrieved_snippet_ids->size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK((*v5.retrieved_snippet_ids)[i] == expected[i].snippet_id);
    }
    CHECK(h.last_user() == context_prompt(c.text, build_context(expected, index), h.config).user_prompt);
    CHECK(validate_verdict(v5).empty());

    const auto v10 = verify_with_retrieval(c, index, 10, *h.client);
    REQUIRE(v10.retrieved_snippet_ids->size() == 10);
    CHECK(std::equal(v5.retrieved_snippet_ids->begin(), v5.retrieved_snippet_ids->end(),
                     v10.retrieved_snippet_ids->begin()));
    const auto all = verify_with_retrieval(c, index, 100, *h.client);
    CHECK(all.retrieved_snippet_ids->size() == index.size());
    CHECK_THROWS_AS((void)verify_with_retrieval(c, CorpusIndex{}, 5, *h.client), ValidationError);
}

TEST_CASE("verify_claims keeps claim order and isolates failures") {
    std::atomic<int> n{0};
    auto transport = std::make_shared<fptest::ScriptedTransport>([&](const std::string&, const json& body) {
        const auto user = body["messages"].back()["content"].get<std::string>();
        if (user.find("flaky") != std::string::npos) {
            return fptest::status_reply(503);
        }
        ++n;
        return fptest::ok_reply(user.find("bad") != std::string::npos ? "False" : "True");
    });
    Harness h(transport);
    h.config.retry_max_attempts = 2;
    h.client = std::make_unique<LlmClient>(h.config, transport);
    std::vector<Claim> claims;
    for (int i = 0; i < 20; ++i) {
        claims.push_back(claim("d#s0#c" + std::to_string(i), "d",
                               i == 7 ? "a flaky claim" : (i % 3 == 0 ? "bad claim " : "good claim ") +
                                                              std::to_string(i)));
    }
    VerifierSetup setup;
    const auto out = verify_claims(claims, setup, *h.client);
    REQUIRE(out.size() == claims.size());
    for (std::size_t i = 0; i < claims.size(); ++i) {
        CHECK(out[i].claim_id == claims[i].id);
        if (i == 7) {
            CHECK(out[i].failed);
            CHECK_FALSE(out[i].verdict.has_value());
        } else {
            REQUIRE(out[i].verdict.has_value());
            CHECK(out[i].verdict->value == (i % 3 != 0));
        }
    }
    CHECK(n.load() == 19);
}

TEST_CASE("verify_claims setup preconditions") {
    Harness h(fptest::ScriptedTransport::answering([](const std::string&, const std::string&) { return "True"; }));
    const std::vector<Claim> claims{claim("d#s0#c0", "d", "x"), claim("e#s0#c0", "e", "y")};
    VerifierSetup ref;
    ref.strategy = Strategy::Reference;
    CHECK_THROWS_AS((void)verify_claims(claims, ref, *h.client), MissingReference);
    std::map<std::string, std::optional<std::string>> refs{{"d", "ref d"}, {"e", std::nullopt}};
    ref.references = &refs;
    CHECK_THROWS_AS((void)verify_claims(claims, ref, *h.client), MissingReference);
    refs["e"] = "ref e";
    const auto ok = verify_claims(claims, ref, *h.client);
    CHECK(ok[1].verdict->strategy == Strategy::Reference);

    VerifierSetup retr;
    retr.strategy = Strategy::Retrieval;
    CHECK_THROWS_AS((void)verify_claims(claims, retr, *h.client), ValidationError);
}

TEST_CASE("dense retrieval uses supplied query vectors") {
    Harness h(fptest::ScriptedTransport::answering([](const std::string&, const std::string&) { return "True"; }));
    std::vector<Snippet> snippets;
    for (int i = 0; i < 4; ++i) {
        Snippet s;
        s.id = "s" + std::to_string(i);
        s.content = "same text";
        s.embedding = std::vector<double>{i == 2 ? 1.0 : 0.0, i == 2 ? 0.0 : 1.0};
        snippets.push_back(s);
    }
    const auto index = CorpusIndex::build(snippets);
    const std::vector<Claim> claims{claim("d#s0#c0", "d", "same text")};
    std::map<std::string, std::vector<double>> qe{{"d#s0#c0", {1.0, 0.0}}};
    VerifierSetup setup;
    setup.strategy = Strategy::Retrieval;
    setup.index = &index;
    setup.k = 1;
    setup.query_embeddings = &qe;
    const auto out = verify_claims(claims, setup, *h.client);
    CHECK(out[0].verdict->retrieved_snippet_ids == std::vector<std::string>{"s2"});
    setup.query_embeddings = nullptr;
    const auto lexical = verify_claims(claims, setup, *h.client);
    CHECK(lexical[0].verdict->retrieved_snippet_ids == std::vector<std::string>{"s0"});
}
