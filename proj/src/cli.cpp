#include "factpipe/cli.hpp"

#include "factpipe/decomposer.hpp"
#include "factpipe/error.hpp"
#include "factpipe/hashing.hpp"
#include "factpipe/jsonl.hpp"
#include "factpipe/log.hpp"
#include "factpipe/metrics.hpp"
#include "factpipe/report.hpp"
#include "factpipe/retriever.hpp"
#include "factpipe/text.hpp"
#include "factpipe/verifier.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace factpipe {

namespace fs = std::filesystem;

// Configuration ----------------------------------------------------------------

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t line_no = 0;
    for (auto raw : split_lines(text)) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == '[') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = std::string(trim(line.substr(0, eq)));
        auto value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '"') {
            const auto close = value.find('"', 1);
            if (close == std::string_view::npos) {
                throw ValidationError("config line " + std::to_string(line_no) + ": unterminated string");
            }
            value = value.substr(1, close - 1);
        } else if (auto hash = value.find(" #"); hash != std::string_view::npos) {
            value = trim(value.substr(0, hash));
        }
        if (key.empty()) {
            throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
        }
        out[key] = std::string(value);
    }
    return out;
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ValidationError("config " + key + ": expected a number, got '" + value + "'");
    }
    return out;
}

int parse_int(const std::string& key, const std::string& value) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ValidationError("config " + key + ": expected an integer, got '" + value + "'");
    }
    return out;
}

} // namespace

void apply_config_values(RunConfig& config, const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        if (key == "model") {
            config.model_name = value;
        } else if (key == "endpoint") {
            config.endpoint_url = value;
        } else if (key == "temperature") {
            config.temperature = parse_double(key, value);
        } else if (key == "top_p") {
            config.top_p = parse_double(key, value);
        } else if (key == "max_tokens") {
            config.max_tokens = parse_int(key, value);
        } else if (key == "top_k") {
            config.top_k = parse_int(key, value);
        } else if (key == "concurrency") {
            config.concurrency_limit = parse_int(key, value);
        } else if (key == "cache_dir") {
            config.cache_dir = value;
        } else if (key == "nli_threshold") {
            config.nli_threshold = parse_double(key, value);
        } else if (key == "retry_max_attempts") {
            config.retry_max_attempts = parse_int(key, value);
        } else if (key == "retry_base_ms") {
            config.retry_base_ms = parse_int(key, value);
        } else if (key == "request_timeout_s") {
            config.request_timeout_s = parse_int(key, value);
        } else if (key == "embedding_endpoint") {
            config.embedding_endpoint_url = value;
        } else if (key == "embedding_model") {
            config.embedding_model = value;
        } else {
            throw ValidationError("config: unknown key '" + key + "'");
        }
    }
}

RunConfig config_from_environment() {
    RunConfig config;
    if (const char* endpoint = std::getenv(kEndpointEnv); endpoint != nullptr && *endpoint != '\0') {
        config.endpoint_url = endpoint;
    }
    return config;
}

std::vector<Document> load_dataset(const fs::path& path) {
    std::vector<Document> docs;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_jsonl(path, [&](const json& j, std::size_t line) {
        auto doc = document_from_json(j);
        if (auto problems = validate_document(doc); !problems.empty()) {
            throw ValidationError(problems.front());
        }
        if (auto [it, inserted] = seen.emplace(doc.id, line); !inserted) {
            throw ValidationError("id: duplicate '" + doc.id + "' (first seen on line " + std::to_string(it->second) +
                                  ")");
        }
        docs.push_back(std::move(doc));
    });
    return docs;
}

namespace {

// Flags shared by every command that talks to a model.
struct ConfigFlags {
    std::string config_file;
    std::string model;
    std::string endpoint;
    std::string cache_dir;
    std::string embedding_endpoint;
    std::string embedding_model;
    double temperature = 0.0;
    double top_p = 1.0;
    double nli_threshold = 0.8;
    int max_tokens = 256;
    int concurrency = 8;
    int retry_max_attempts = 5;
    int retry_base_ms = 1000;
    int timeout = 120;
    std::map<std::string, CLI::Option*> opts;

    void add_to(CLI::App* cmd) {
        opts["config"] = cmd->add_option("--config", config_file, "key = value configuration file");
        opts["model"] = cmd->add_option("--model", model, "Model name");
        opts["endpoint"] = cmd->add_option("--endpoint", endpoint, "Chat completions endpoint URL");
        opts["cache_dir"] = cmd->add_option("--cache-dir", cache_dir, "Response cache directory");
        opts["temperature"] = cmd->add_option("--temperature", temperature);
        opts["top_p"] = cmd->add_option("--top-p", top_p);
        opts["max_tokens"] = cmd->add_option("--max-tokens", max_tokens);
        opts["concurrency"] = cmd->add_option("--concurrency", concurrency, "Maximum requests in flight");
        opts["retry_max_attempts"] = cmd->add_option("--retry-max-attempts", retry_max_attempts);
        opts["retry_base_ms"] = cmd->add_option("--retry-base-ms", retry_base_ms);
        opts["request_timeout_s"] = cmd->add_option("--timeout", timeout, "Request timeout in seconds");
        opts["nli_threshold"] = cmd->add_option("--nli-threshold", nli_threshold);
        opts["embedding_endpoint"] = cmd->add_option("--embedding-endpoint", embedding_endpoint);
        opts["embedding_model"] = cmd->add_option("--embedding-model", embedding_model);
    }

    [[nodiscard]] bool given(const char* name) const { return opts.at(name)->count() > 0; }

    // defaults < environment < config file < flags
    [[nodiscard]] RunConfig resolve() const {
        auto config = config_from_environment();
        if (given("config")) {
            std::ifstream in(config_file, std::ios::binary);
            if (!in) {
                throw ValidationError("cannot open config file " + config_file);
            }
            std::stringstream buf;
            buf << in.rdbuf();
            apply_config_values(config, parse_config_text(buf.str()));
        }
        if (given("model")) config.model_name = model;
        if (given("endpoint")) config.endpoint_url = endpoint;
        if (given("cache_dir")) config.cache_dir = cache_dir;
        if (given("temperature")) config.temperature = temperature;
        if (given("top_p")) config.top_p = top_p;
        if (given("max_tokens")) config.max_tokens = max_tokens;
        if (given("concurrency")) config.concurrency_limit = concurrency;
        if (given("retry_max_attempts")) config.retry_max_attempts = retry_max_attempts;
        if (given("retry_base_ms")) config.retry_base_ms = retry_base_ms;
        if (given("request_timeout_s")) config.request_timeout_s = timeout;
        if (given("nli_threshold")) config.nli_threshold = nli_threshold;
        if (given("embedding_endpoint")) config.embedding_endpoint_url = embedding_endpoint;
        if (given("embedding_model")) config.embedding_model = embedding_model;
        if (auto problems = validate_config(config); !problems.empty()) {
            throw ValidationError("config: " + problems.front());
        }
        return config;
    }
};

json config_to_json(const RunConfig& c) {
    return {{"model_name", c.model_name},
            {"endpoint_url", c.endpoint_url},
            {"temperature", c.temperature},
            {"top_p", c.top_p},
            {"max_tokens", c.max_tokens},
            {"top_k", c.top_k},
            {"concurrency_limit", c.concurrency_limit},
            {"cache_dir", c.cache_dir.string()},
            {"nli_threshold", c.nli_threshold}};
}

std::int64_t now_unix() {
    // SOURCE_DATE_EPOCH pins timestamps for reproducible manifests.
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(epoch, epoch + std::strlen(epoch), v);
        if (ec == std::errc() && *ptr == '\0') {
            return v;
        }
    }
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string pretty(const json& j) { return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n"; }

fs::path markdown_path(const fs::path& json_out) {
    auto md = json_out;
    md.replace_extension(".md");
    return md;
}

fs::path sidecar_path(const fs::path& out, const std::string& suffix) {
    return out.parent_path() / (out.stem().string() + suffix);
}

// Files produced by one stage; removed again unless the stage commits.
class StageOutputs {
public:
    StageOutputs() = default;
    StageOutputs(const StageOutputs&) = delete;
    StageOutputs& operator=(const StageOutputs&) = delete;
    ~StageOutputs() {
        if (committed_) {
            return;
        }
        for (const auto& p : written_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }

    void write(const fs::path& path, const std::string& content) {
        if (path.has_parent_path()) {
            fs::create_directories(path.parent_path());
        }
        write_file_atomic(path, content);
        written_.push_back(path);
    }

    void commit() { committed_ = true; }

private:
    std::vector<fs::path> written_;
    bool committed_ = false;
};

class Manifest {
public:
    static Manifest open(const fs::path& path) {
        Manifest m;
        m.path_ = path;
        std::ifstream in(path, std::ios::binary);
        if (in) {
            std::stringstream buf;
            buf << in.rdbuf();
            m.data_ = json::parse(buf.str(), nullptr, false);
            if (m.data_.is_discarded() || !m.data_.is_object()) {
                throw ValidationError(path.string() + ": malformed manifest");
            }
        } else {
            m.data_ = json::object();
        }
        return m;
    }

    // Fails on a digest that differs from the pinned one unless drift is allowed.
    void pin_digest(const char* key, const std::string& digest, bool allow_drift) {
        auto it = data_.find(key);
        if (it != data_.end() && it->is_string() && it->get<std::string>() != digest) {
            const auto message = std::string(key) + " mismatch: manifest " + path_.string() + " pins " +
                                 it->get<std::string>() + ", current input is " + digest;
            if (!allow_drift) {
                throw ValidationError(message + " (pass --allow-drift to accept)");
            }
            log_warn(message + " (accepted with --allow-drift)");
        }
        data_[key] = digest;
    }

    void record(const std::string& stage, const fs::path& output) { data_["stage_outputs"][stage] = output.string(); }

    void set_config(const RunConfig& config) { data_["config"] = config_to_json(config); }

    void save(StageOutputs& outputs) {
        const auto t = now_unix();
        if (!data_.contains("created_unix")) {
            data_["created_unix"] = t;
        }
        data_["updated_unix"] = t;
        const auto model = data_.contains("config") ? data_["config"].value("model_name", "") : std::string();
        data_["run_id"] = sha256_hex("template\n" + data_.value("template_digest", std::string()) + "\ncorpus\n" +
                                     data_.value("corpus_digest", std::string()) + "\nmodel\n" + model)
                              .substr(0, 16);
        outputs.write(path_, pretty(data_));
    }

private:
    fs::path path_;
    json data_;
};

fs::path manifest_path_for(const std::string& flag, const fs::path& out) {
    if (!flag.empty()) {
        return flag;
    }
    return out.parent_path() / "manifest.json";
}

std::shared_ptr<Transport> transport_for(const CliContext& ctx, const RunConfig& config) {
    if (ctx.transport) {
        return ctx.transport;
    }
    return std::make_shared<HttpTransport>(std::chrono::seconds(config.request_timeout_s));
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    auto j = json::parse(buf.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ValidationError(path.string() + ": expected a JSON object");
    }
    return j;
}

void require_unique_claim_ids(const std::vector<Claim>& claims) {
    std::set<std::string> ids;
    for (const auto& c : claims) {
        if (!ids.insert(c.id).second) {
            throw ValidationError("duplicate claim id '" + c.id + "'");
        }
    }
}

// Commands ---------------------------------------------------------------------

struct CommonFlags {
    std::string out;
    std::string manifest;
    bool allow_drift = false;
};

struct DecomposeArgs {
    std::string dataset;
    std::string template_path;
    std::string unit = "sentence";
    std::vector<std::string> adapt;
    std::string diagnostics;
};

int cmd_decompose(const DecomposeArgs& a, const CommonFlags& common, const ConfigFlags& flags,
                  const CliContext& ctx) {
    const auto docs = load_dataset(a.dataset);
    auto tmpl = load_template(a.template_path);
    for (const auto& rule : a.adapt) {
        const auto arrow = rule.find("=>");
        if (arrow == std::string::npos) {
            throw ValidationError("--adapt expects OLD=>NEW, got '" + rule + "'");
        }
        tmpl = adapt_template_domain(tmpl, rule.substr(0, arrow), rule.substr(arrow + 2));
    }
    const auto mode = a.unit == "whole" ? Segmentation::WholeResponse : Segmentation::Sentences;
    const auto config = flags.resolve();
    const fs::path out = common.out;
    auto manifest = Manifest::open(manifest_path_for(common.manifest, out));
    manifest.pin_digest("template_digest", template_digest(tmpl), common.allow_drift);

    LlmClient client(config, transport_for(ctx, config));
    const auto results = decompose_documents(docs, tmpl, mode, client);

    std::string claims_text;
    std::string diag_text;
    std::size_t claim_total = 0;
    std::size_t failed_units = 0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        json diag;
        diag["document_id"] = docs[d].id;
        diag["unit"] = a.unit;
        diag["sentence_count"] = results[d].size();
        json per_sentence = json::array();
        json zero = json::array();
        json failed = json::array();
        json errors = json::array();
        std::size_t dropped = 0;
        for (const auto& r : results[d]) {
            per_sentence.push_back(r.claims.size());
            zero.push_back(r.zero_claim);
            dropped += r.dropped_lines;
            if (r.failed) {
                failed.push_back(r.sentence_index);
                errors.push_back(r.error);
                ++failed_units;
            }
            for (const auto& c : r.claims) {
                claims_text += dump_line(to_json(c));
                claims_text += '\n';
                ++claim_total;
            }
        }
        diag["claims_per_sentence"] = per_sentence;
        diag["zero_claim"] = zero;
        diag["failed_sentences"] = failed;
        diag["errors"] = errors;
        diag["dropped_lines"] = dropped;
        diag_text += dump_line(diag);
        diag_text += '\n';
    }

    const fs::path diag_path = a.diagnostics.empty() ? sidecar_path(out, ".diagnostics.jsonl") : fs::path(a.diagnostics);
    StageOutputs outputs;
    outputs.write(out, claims_text);
    outputs.write(diag_path, diag_text);
    manifest.set_config(config);
    manifest.record("decompose", out);
    manifest.record("decompose_diagnostics", diag_path);
    manifest.save(outputs);
    outputs.commit();
    *ctx.out << "decompose: " << docs.size() << " documents, " << claim_total << " claims, " << failed_units
             << " failed units\n";
    return kExitOk;
}

struct VerifyArgs {
    std::string claims;
    std::string strategy;
    std::string dataset;
    std::vector<std::string> corpus;
    int k = static_cast<int>(kDefaultTopK);
    std::string query_embeddings;
    std::string failed;
};

std::map<std::string, std::vector<double>> read_query_embeddings(const fs::path& path) {
    std::map<std::string, std::vector<double>> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) {
        if (!j.is_object()) {
            throw ValidationError("expected a JSON object");
        }
        auto id = j.find("claim_id");
        if (id == j.end()) {
            id = j.find("id");
        }
        auto vec = j.find("vector");
        if (id == j.end() || !id->is_string()) {
            throw ValidationError("claim_id: expected string");
        }
        if (vec == j.end() || !vec->is_array() || vec->empty()) {
            throw ValidationError("vector: expected non-empty array");
        }
        std::vector<double> v;
        for (const auto& x : *vec) {
            if (!x.is_number()) {
                throw ValidationError("vector: expected numbers");
            }
            v.push_back(x.get<double>());
        }
        out[id->get<std::string>()] = std::move(v);
    });
    return out;
}

int cmd_verify(const VerifyArgs& a, const CommonFlags& common, const ConfigFlags& flags, const CliContext& ctx) {
    const auto strategy = parse_strategy(a.strategy);
    if (!strategy) {
        throw ValidationError("--strategy must be internal, reference or retrieval");
    }
    if (a.k < 1) {
        throw ValidationError("--k must be >= 1");
    }
    const auto claims = read_claims(a.claims);
    require_unique_claim_ids(claims);
    const fs::path out = common.out;
    auto manifest = Manifest::open(manifest_path_for(common.manifest, out));

    VerifierSetup setup;
    setup.strategy = *strategy;
    setup.k = static_cast<std::size_t>(a.k);
    std::map<std::string, std::optional<std::string>> references;
    CorpusIndex index;
    std::map<std::string, std::vector<double>> query_vectors;

    if (*strategy == Strategy::Reference) {
        if (a.dataset.empty()) {
            throw ValidationError("strategy reference needs --dataset with reference_response fields");
        }
        for (const auto& d : load_dataset(a.dataset)) {
            references.emplace(d.id, d.reference_response);
        }
        for (const auto& c : claims) {
            auto it = references.find(c.document_id);
            if (it == references.end()) {
                throw ValidationError("claim " + c.id + ": unknown document_id '" + c.document_id + "'");
            }
            if (!it->second || trim(*it->second).empty()) {
                throw ValidationError("document " + c.document_id +
                                      ": reference_response is missing (required by strategy reference)");
            }
        }
        setup.references = &references;
    } else if (*strategy == Strategy::Retrieval) {
        if (a.corpus.empty()) {
            throw ValidationError("strategy retrieval needs at least one --corpus");
        }
        std::vector<fs::path> paths(a.corpus.begin(), a.corpus.end());
        index = ingest_corpora(paths);
        if (index.empty()) {
            throw ValidationError("retrieval corpus is empty");
        }
        manifest.pin_digest("corpus_digest", corpus_digest(paths), common.allow_drift);
        setup.index = &index;
        if (!a.query_embeddings.empty()) {
            query_vectors = read_query_embeddings(a.query_embeddings);
            setup.query_embeddings = &query_vectors;
        }
    }

    const auto config = flags.resolve();
    setup.embed_queries = !config.embedding_endpoint_url.empty();
    LlmClient client(config, transport_for(ctx, config));
    const auto outcomes = verify_claims(claims, setup, client);

    std::string verdicts_text;
    std::string failed_text;
    std::vector<Verdict> verdicts;
    for (const auto& o : outcomes) {
        if (o.verdict) {
            verdicts_text += dump_line(to_json(*o.verdict));
            verdicts_text += '\n';
            verdicts.push_back(*o.verdict);
        } else {
            failed_text += dump_line(json{{"claim_id", o.claim_id}, {"error", o.error}});
            failed_text += '\n';
        }
    }
    const fs::path failed_path = a.failed.empty() ? sidecar_path(out, ".failed.jsonl") : fs::path(a.failed);
    StageOutputs outputs;
    outputs.write(out, verdicts_text);
    outputs.write(failed_path, failed_text);
    manifest.set_config(config);
    const auto stage = "verify_" + std::string(to_string(*strategy));
    manifest.record(stage, out);
    manifest.record(stage + "_failed", failed_path);
    manifest.save(outputs);
    outputs.commit();
    *ctx.out << "verify (" << to_string(*strategy) << "): " << verdicts.size() << " verdicts, "
             << (outcomes.size() - verdicts.size()) << " failed, unparseable "
             << format_percent(unparseable_verdict_rate(verdicts)) << "\n";
    return kExitOk;
}

struct ScoreArgs {
    std::string claims;
    std::string verdicts;
    std::string dataset;
};

int cmd_score(const ScoreArgs& a, const CommonFlags& common, const CliContext& ctx) {
    const auto claims = read_claims(a.claims);
    require_unique_claim_ids(claims);
    const auto verdicts = read_verdicts(a.verdicts);
    std::vector<std::string> doc_ids;
    if (!a.dataset.empty()) {
        for (const auto& d : load_dataset(a.dataset)) {
            doc_ids.push_back(d.id);
        }
    } else {
        std::set<std::string> seen;
        for (const auto& c : claims) {
            if (seen.insert(c.document_id).second) {
                doc_ids.push_back(c.document_id);
            }
        }
    }
    const auto scores = score_responses(doc_ids, claims, verdicts);
    json report;
    report["dataset_factuality"] = dataset_factuality(scores);
    report["dataset_factuality_micro"] = dataset_factuality_micro(scores);
    report["unparseable_verdict_rate"] = unparseable_verdict_rate(verdicts);
    std::size_t zero = 0;
    for (const auto& s : scores) {
        if (s.claim_count == 0) {
            ++zero;
        }
    }
    report["counts"] = {{"responses", scores.size()},
                        {"zero_claim_responses", zero},
                        {"claims", claims.size()},
                        {"verdicts", verdicts.size()},
                        {"unverified_claims", claims.size() - verdicts.size()}};
    json per = json::array();
    for (const auto& s : scores) {
        per.push_back(to_json(s));
    }
    report["responses"] = per;

    const fs::path out = common.out;
    auto manifest = Manifest::open(manifest_path_for(common.manifest, out));
    StageOutputs outputs;
    outputs.write(out, pretty(report));
    outputs.write(markdown_path(out), render_markdown(report));
    manifest.record("score", out);
    manifest.save(outputs);
    outputs.commit();
    *ctx.out << "score: factuality " << format_percent(report["dataset_factuality"].get<double>()) << " over "
             << (scores.size() - zero) << " responses\n";
    return kExitOk;
}

struct StatsArgs {
    std::string claims;
    std::string diagnostics;
};

int cmd_stats(const StatsArgs& a, const CommonFlags& common, const CliContext& ctx) {
    const auto claims = read_claims(a.claims);
    require_unique_claim_ids(claims);
    std::map<std::string, std::vector<std::string>> texts;
    for (const auto& c : claims) {
        texts[c.document_id].push_back(c.text);
    }
    std::vector<DocumentClaims> docs;
    std::set<std::string> known;
    std::size_t excluded = 0;
    for_each_jsonl(a.diagnostics, [&](const json& j, std::size_t) {
        if (!j.is_object() || !j.contains("document_id") || !j["document_id"].is_string()) {
            throw ValidationError("document_id: expected string");
        }
        DocumentClaims d;
        d.document_id = j["document_id"].get<std::string>();
        if (!known.insert(d.document_id).second) {
            throw ValidationError("duplicate document_id '" + d.document_id + "'");
        }
        const auto cps = j.find("claims_per_sentence");
        if (cps == j.end() || !cps->is_array()) {
            throw ValidationError("claims_per_sentence: expected array");
        }
        std::size_t total = 0;
        for (const auto& n : *cps) {
            if (!n.is_number_unsigned()) {
                throw ValidationError("claims_per_sentence: expected non-negative integers");
            }
            d.claims_per_sentence.push_back(n.get<std::size_t>());
            total += d.claims_per_sentence.back();
        }
        if (auto it = texts.find(d.document_id); it != texts.end()) {
            d.claim_texts = it->second;
        }
        if (total != d.claim_texts.size()) {
            throw ValidationError("document " + d.document_id + ": diagnostics count " + std::to_string(total) +
                                  " claims but the claims file has " + std::to_string(d.claim_texts.size()));
        }
        const auto failed = j.find("failed_sentences");
        if (failed != j.end() && failed->is_array() && !failed->empty()) {
            ++excluded;
            return;
        }
        docs.push_back(std::move(d));
    });
    for (const auto& [doc_id, _] : texts) {
        if (!known.count(doc_id)) {
            throw ValidationError("claims reference document '" + doc_id + "' missing from the diagnostics");
        }
    }
    json report;
    report["claim_stats"] = to_json(claim_stats(docs));
    report["claim_stats"]["excluded_documents"] = excluded;
    const fs::path out = common.out;
    auto manifest = Manifest::open(manifest_path_for(common.manifest, out));
    StageOutputs outputs;
    outputs.write(out, pretty(report));
    outputs.write(markdown_path(out), render_markdown(report));
    manifest.record("stats", out);
    manifest.save(outputs);
    outputs.commit();
    *ctx.out << "stats: " << docs.size() << " documents (" << excluded << " excluded)\n";
    return kExitOk;
}

struct NliArgs {
    std::string dataset;
    std::string claims;
    std::string judgments;
};

int cmd_nli_eval(const NliArgs& a, const CommonFlags& common, const ConfigFlags& flags, const CliContext& ctx) {
    const auto docs = load_dataset(a.dataset);
    const auto claims = read_claims(a.claims);
    require_unique_claim_ids(claims);
    const auto config = flags.resolve();
    LlmClient client(config, transport_for(ctx, config));
    const auto judgments = nli_evaluate(docs, claims, client);
    const auto rates = verifiable_rates(docs, claims, judgments);

    json report;
    report["verifiable_rates"] = to_json(rates);
    report["verifiable_rates"]["judgments"] = judgments.size();
    report["verifiable_rates"]["unparseable_judgments"] =
        std::count_if(judgments.begin(), judgments.end(), [](const NliJudgment& j) { return !j.parse_ok; });
    report["verifiable_rates"]["threshold"] = config.nli_threshold;

    const fs::path out = common.out;
    const fs::path judgments_path = a.judgments.empty() ? sidecar_path(out, ".judgments.jsonl") : fs::path(a.judgments);
    auto manifest = Manifest::open(manifest_path_for(common.manifest, out));
    StageOutputs outputs;
    outputs.write(judgments_path, to_jsonl(judgments));
    outputs.write(out, pretty(report));
    outputs.write(markdown_path(out), render_markdown(report));
    manifest.set_config(config);
    manifest.record("nli_eval", out);
    manifest.record("nli_judgments", judgments_path);
    manifest.save(outputs);
    outputs.commit();
    *ctx.out << "nli-eval: " << rates.verifiable_documents << " verifiable responses, adjusted rate "
             << format_percent(rates.adjusted_rate) << "\n";
    return kExitOk;
}

struct KappaArgs {
    std::string annotations;
    std::string a;
    std::string b;
    std::string reconcile = "intersection";
    std::string annotator;
};

int cmd_kappa(const KappaArgs& a, const CommonFlags& common, const CliContext& ctx) {
    const auto records = read_annotations(a.annotations);
    std::vector<AnnotationRecord> ra;
    std::vector<AnnotationRecord> rb;
    for (const auto& r : records) {
        if (r.annotator_id == a.a) {
            ra.push_back(r);
        } else if (r.annotator_id == a.b) {
            rb.push_back(r);
        }
    }
    if (ra.empty()) {
        throw ValidationError("no annotations by annotator '" + a.a + "'");
    }
    json report;
    if (!a.b.empty()) {
        if (rb.empty()) {
            throw ValidationError("no annotations by annotator '" + a.b + "'");
        }
        report["kappa"] = cohens_kappa(ra, rb);
        report["annotators"] = {a.a, a.b};
    } else {
        report["kappa"] = nullptr;
        report["annotators"] = {a.a};
    }
    TaxonomyBreakdown breakdown;
    if (a.reconcile == "intersection") {
        std::vector<AnnotationRecord> both = ra;
        both.insert(both.end(), rb.begin(), rb.end());
        breakdown = taxonomy_breakdown(both, Reconciliation::Intersection);
        report["reconciliation"] = "intersection";
    } else {
        const auto who = a.annotator.empty() ? a.a : a.annotator;
        breakdown = taxonomy_breakdown(records, Reconciliation::Annotator, who);
        report["reconciliation"] = "annotator:" + who;
    }
    report["taxonomy"] = to_json(breakdown);

    const fs::path out = common.out;
    auto manifest = Manifest::open(manifest_path_for(common.manifest, out));
    StageOutputs outputs;
    outputs.write(out, pretty(report));
    outputs.write(markdown_path(out), render_markdown(report));
    manifest.record("kappa", out);
    manifest.save(outputs);
    outputs.commit();
    *ctx.out << "kappa: " << (report["kappa"].is_null() ? std::string("n/a") : format_fixed2(report["kappa"].get<double>()))
             << ", " << breakdown.total_claims << " claims\n";
    return kExitOk;
}

struct ReportArgs {
    std::string score;
    std::string stats;
    std::string nli;
    std::string kappa;
    std::string manifest;
};

// Drops machine-local and time-dependent fields so reports regenerate byte
// for byte.
json portable_manifest(const json& m) {
    json out = json::object();
    for (const char* key : {"run_id", "template_digest", "corpus_digest"}) {
        if (auto it = m.find(key); it != m.end()) {
            out[key] = *it;
        }
    }
    if (auto cfg = m.find("config"); cfg != m.end() && cfg->is_object()) {
        json c = *cfg;
        c.erase("cache_dir");
        c.erase("endpoint_url");
        out["config"] = c;
    }
    if (auto so = m.find("stage_outputs"); so != m.end() && so->is_object()) {
        json s = json::object();
        for (const auto& [stage, path] : so->items()) {
            s[stage] = path.is_string() ? json(fs::path(path.get<std::string>()).filename().string()) : path;
        }
        out["stage_outputs"] = s;
    }
    return out;
}

int cmd_report(const ReportArgs& a, const CommonFlags& common, const CliContext& ctx) {
    if (a.score.empty() && a.stats.empty() && a.nli.empty() && a.kappa.empty()) {
        throw ValidationError("report needs at least one of --score, --stats, --nli, --kappa");
    }
    json report;
    for (const char* key : {"dataset_factuality", "dataset_factuality_micro", "unparseable_verdict_rate",
                            "claim_stats", "verifiable_rates", "taxonomy", "kappa"}) {
        report[key] = nullptr;
    }
    if (!a.score.empty()) {
        const auto s = read_json_file(a.score);
        for (const char* key : {"dataset_factuality", "dataset_factuality_micro", "unparseable_verdict_rate", "counts"}) {
            if (!s.contains(key)) {
                throw ValidationError(a.score + ": missing '" + key + "'");
            }
            report[key] = s[key];
        }
    }
    if (!a.stats.empty()) {
        report["claim_stats"] = read_json_file(a.stats).value("claim_stats", json());
    }
    if (!a.nli.empty()) {
        report["verifiable_rates"] = read_json_file(a.nli).value("verifiable_rates", json());
    }
    if (!a.kappa.empty()) {
        const auto k = read_json_file(a.kappa);
        report["taxonomy"] = k.value("taxonomy", json());
        report["kappa"] = k.value("kappa", json());
    }
    if (!a.manifest.empty()) {
        report["manifest"] = portable_manifest(read_json_file(a.manifest));
    }
    const fs::path out = common.out;
    StageOutputs outputs;
    outputs.write(out, pretty(report));
    outputs.write(markdown_path(out), render_markdown(report));
    outputs.commit();
    *ctx.out << "report: " << out.string() << "\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, const CliContext& ctx_in) {
    CliContext ctx = ctx_in;
    if (ctx.out == nullptr) {
        ctx.out = &std::cout;
    }
    if (ctx.err == nullptr) {
        ctx.err = &std::cerr;
    }

    CLI::App app{"Decompose-then-verify factuality evaluation", "factpipe"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

    CommonFlags common;
    auto add_common = [&](CLI::App* cmd, bool manifest) {
        cmd->add_option("--out", common.out, "Output file")->required();
        if (manifest) {
            cmd->add_option("--manifest", common.manifest, "Manifest path (default: manifest.json beside --out)");
            cmd->add_flag("--allow-drift", common.allow_drift, "Accept template/corpus digests that differ from the manifest");
        }
    };

    ConfigFlags decompose_flags;
    DecomposeArgs da;
    auto* decompose = app.add_subcommand("decompose", "Split responses into claims");
    decompose->add_option("--dataset", da.dataset, "Dataset JSONL")->required();
    decompose->add_option("--template", da.template_path, "Prompt template file")->required();
    decompose->add_option("--unit", da.unit, "sentence or whole")->check(CLI::IsMember({"sentence", "whole"}));
    decompose->add_option("--adapt", da.adapt, "Replace a template phrase: OLD=>NEW (repeatable)");
    decompose->add_option("--diagnostics", da.diagnostics, "Diagnostics sidecar path");
    add_common(decompose, true);
    decompose_flags.add_to(decompose);

    ConfigFlags verify_flags;
    VerifyArgs va;
    auto* verify = app.add_subcommand("verify", "Judge claims True/False");
    verify->add_option("--claims", va.claims, "Claims JSONL")->required();
    verify->add_option("--strategy", va.strategy, "internal, reference or retrieval")->required();
    verify->add_option("--dataset", va.dataset, "Dataset JSONL (reference strategy)");
    verify->add_option("--corpus", va.corpus, "Corpus JSONL (retrieval strategy, repeatable)");
    verify->add_option("--k", va.k, "Passages per claim (retrieval)");
    verify->add_option("--query-embeddings", va.query_embeddings, "Claim embeddings JSONL {claim_id, vector}");
    verify->add_option("--failed", va.failed, "Failed-claims sidecar path");
    add_common(verify, true);
    verify_flags.add_to(verify);

    ScoreArgs sa;
    auto* score = app.add_subcommand("score", "Factuality scores");
    score->add_option("--claims", sa.claims)->required();
    score->add_option("--verdicts", sa.verdicts)->required();
    score->add_option("--dataset", sa.dataset, "Dataset JSONL; responses without claims count as 0-claim");
    add_common(score, true);

    StatsArgs sta;
    auto* stats = app.add_subcommand("stats", "Claim statistics");
    stats->add_option("--claims", sta.claims)->required();
    stats->add_option("--diagnostics", sta.diagnostics, "Diagnostics sidecar from decompose")->required();
    add_common(stats, true);

    ConfigFlags nli_flags;
    NliArgs na;
    auto* nli = app.add_subcommand("nli-eval", "Claim verifiability against annotated spans");
    nli->add_option("--dataset", na.dataset, "Dataset JSONL with span_annotations")->required();
    nli->add_option("--claims", na.claims)->required();
    nli->add_option("--judgments", na.judgments, "Judgments JSONL output path");
    add_common(nli, true);
    nli_flags.add_to(nli);

    KappaArgs ka;
    auto* kappa = app.add_subcommand("kappa", "Annotator agreement and taxonomy breakdown");
    kappa->add_option("--annotations", ka.annotations, "Annotations JSONL")->required();
    kappa->add_option("--a", ka.a, "First annotator id")->required();
    kappa->add_option("--b", ka.b, "Second annotator id");
    kappa->add_option("--reconcile", ka.reconcile, "intersection or annotator")
        ->check(CLI::IsMember({"intersection", "annotator"}));
    kappa->add_option("--annotator", ka.annotator, "Annotator for --reconcile annotator (default: --a)");
    add_common(kappa, true);

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Merge stage outputs into one report");
    report->add_option("--score", ra.score);
    report->add_option("--stats", ra.stats);
    report->add_option("--nli", ra.nli);
    report->add_option("--kappa", ra.kappa);
    report->add_option("--manifest", ra.manifest);
    report->add_option("--out", common.out, "Report JSON path (markdown is written beside it)")->required();

    std::vector<std::string> argv_storage;
    argv_storage.reserve(args.size() + 1);
    argv_storage.emplace_back("factpipe");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : argv_storage) {
        argv.push_back(s.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, *ctx.out, *ctx.err);
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, *ctx.out, *ctx.err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, *ctx.out, *ctx.err);
        return kExitInvalid;
    }
    if (verbose) {
        set_log_level(LogLevel::Info);
    }

    try {
        if (decompose->parsed()) {
            return cmd_decompose(da, common, decompose_flags, ctx);
        }
        if (verify->parsed()) {
            return cmd_verify(va, common, verify_flags, ctx);
        }
        if (score->parsed()) {
            return cmd_score(sa, common, ctx);
        }
        if (stats->parsed()) {
            return cmd_stats(sta, common, ctx);
        }
        if (nli->parsed()) {
            return cmd_nli_eval(na, common, nli_flags, ctx);
        }
        if (kappa->parsed()) {
            return cmd_kappa(ka, common, ctx);
        }
        if (report->parsed()) {
            return cmd_report(ra, common, ctx);
        }
    } catch (const PermanentError& e) {
        *ctx.err << "factpipe: error: " << e.what() << "\n";
        return kExitPermanent;
    } catch (const ValidationError& e) {
        *ctx.err << "factpipe: invalid input: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const IngestError& e) {
        *ctx.err << "factpipe: invalid corpus: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const TemplateError& e) {
        *ctx.err << "factpipe: invalid template: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const AdaptError& e) {
        *ctx.err << "factpipe: invalid template adaptation: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const MissingReference& e) {
        *ctx.err << "factpipe: missing reference: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const EmptyDataset& e) {
        *ctx.err << "factpipe: empty dataset: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const MismatchedClaimSets& e) {
        *ctx.err << "factpipe: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const DimensionError& e) {
        *ctx.err << "factpipe: embedding dimension mismatch: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const ZeroVectorError& e) {
        *ctx.err << "factpipe: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        *ctx.err << "factpipe: error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitInvalid;
}

} // namespace factpipe
