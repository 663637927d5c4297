#include "factpipe/llm_client.hpp"

#include "factpipe/error.hpp"
#include "factpipe/hashing.hpp"
#include "factpipe/jsonl.hpp"
#include "factpipe/log.hpp"

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace factpipe {

ChatRequest make_request(const RunConfig& config, std::string user_prompt,
                         std::optional<std::string> system_prompt) {
    ChatRequest req;
    req.system_prompt = std::move(system_prompt);
    req.user_prompt = std::move(user_prompt);
    req.model_name = config.model_name;
    req.temperature = config.temperature;
    req.top_p = config.top_p;
    req.max_tokens = config.max_tokens;
    return req;
}

std::vector<std::string> validate_request(const ChatRequest& req) {
    std::vector<std::string> out;
    if (req.user_prompt.empty()) {
        out.emplace_back("user_prompt: empty");
    }
    if (req.model_name.empty()) {
        out.emplace_back("model_name: empty");
    }
    if (!(req.temperature >= 0.0)) {
        out.emplace_back("temperature: must be >= 0");
    }
    if (!(req.top_p > 0.0 && req.top_p <= 1.0)) {
        out.emplace_back("top_p: must be in (0, 1]");
    }
    if (req.max_tokens < 1) {
        out.emplace_back("max_tokens: must be >= 1");
    }
    return out;
}

std::string canonical_prompt(const ChatRequest& req) {
    if (!req.system_prompt) {
        return req.user_prompt;
    }
    return "[system]\n" + *req.system_prompt + "\n[user]\n" + req.user_prompt;
}

std::string request_cache_key(const ChatRequest& req) {
    return cache_key(req.model_name, canonical_prompt(req), req.temperature, req.top_p, req.max_tokens);
}

std::string request_to_json(const ChatRequest& req) {
    json j;
    j["model"] = req.model_name;
    j["system_prompt"] = req.system_prompt ? json(*req.system_prompt) : json(nullptr);
    j["user_prompt"] = req.user_prompt;
    j["temperature"] = req.temperature;
    j["top_p"] = req.top_p;
    j["max_tokens"] = req.max_tokens;
    return dump_line(j);
}

bool is_transient_status(int status) noexcept {
    return status == 429 || (status >= 500 && status <= 599);
}

std::chrono::milliseconds RetryPolicy::delay_after(int attempt, double unit) const {
    const double scale = std::pow(factor, std::max(0, attempt - 1));
    const double jittered = static_cast<double>(base.count()) * scale * (1.0 - jitter + 2.0 * jitter * unit);
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(jittered)));
}

// Cache ----------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::load(const std::string& key) const {
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    auto j = json::parse(buf.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return std::nullopt;
    }
    auto it = j.find("response_text");
    if (it == j.end() || !it->is_string()) {
        return std::nullopt;
    }
    return it->get<std::string>();
}

void ResponseCache::store(const std::string& key, const std::string& request_json,
                          const std::string& response_text) const {
    json j;
    j["request"] = json::parse(request_json);
    j["response_text"] = response_text;
    j["created_unix"] = static_cast<std::int64_t>(std::time(nullptr));
    write_file_atomic(path_for(key), j.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
}

// Gate -----------------------------------------------------------------------

InFlightGate::InFlightGate(int limit) : limit_(std::max(1, limit)) {}

void InFlightGate::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
}

void InFlightGate::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

namespace {

class GateHold {
public:
    explicit GateHold(InFlightGate& gate) : gate_(gate) { gate_.acquire(); }
    ~GateHold() { gate_.release(); }
    GateHold(const GateHold&) = delete;
    GateHold& operator=(const GateHold&) = delete;

private:
    InFlightGate& gate_;
};

double jitter_unit() {
    thread_local std::mt19937 rng{std::random_device{}()};
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::optional<std::string> extract_chat_text(const std::string& body) {
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return std::nullopt;
    }
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        return std::nullopt;
    }
    const auto& first = (*choices)[0];
    if (!first.is_object()) {
        return std::nullopt;
    }
    if (auto msg = first.find("message"); msg != first.end() && msg->is_object()) {
        auto content = msg->find("content");
        if (content != msg->end() && content->is_string()) {
            return content->get<std::string>();
        }
        if (content != msg->end() && content->is_null()) {
            return std::string{};
        }
    }
    // Legacy completions shape.
    if (auto text = first.find("text"); text != first.end() && text->is_string()) {
        return text->get<std::string>();
    }
    return std::nullopt;
}

std::optional<std::string> extract_embedding(const std::string& body) {
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return std::nullopt;
    }
    auto data = j.find("data");
    if (data == j.end() || !data->is_array() || data->empty()) {
        return std::nullopt;
    }
    const auto& first = (*data)[0];
    if (!first.is_object()) {
        return std::nullopt;
    }
    const auto emb = first.value("embedding", json());
    if (!emb.is_array() || emb.empty()) {
        return std::nullopt;
    }
    for (const auto& x : emb) {
        if (!x.is_number()) {
            return std::nullopt;
        }
    }
    return dump_line(emb);
}

std::string describe(TransportFailure f) {
    switch (f) {
    case TransportFailure::ConnectFailed: return "connection failed";
    case TransportFailure::Timeout: return "timeout";
    case TransportFailure::ConnectionReset: return "connection reset";
    case TransportFailure::Other: return "transport error";
    case TransportFailure::None: break;
    }
    return "ok";
}

} // namespace

std::string normalize_chat_url(const std::string& url) {
    if (url.empty()) {
        return url;
    }
    const auto scheme = url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto path = url.find('/', host_start);
    if (path == std::string::npos || path + 1 == url.size()) {
        auto base = path == std::string::npos ? url : url.substr(0, path);
        return base + "/v1/chat/completions";
    }
    return url;
}

// Client ---------------------------------------------------------------------

LlmClient::LlmClient(RunConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cache_(config_.cache_dir),
      gate_(std::make_shared<InFlightGate>(config_.concurrency_limit)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    retry_.max_attempts = config_.retry_max_attempts;
    retry_.base = std::chrono::milliseconds(config_.retry_base_ms);
    if (const char* key = std::getenv(kApiKeyEnv); key != nullptr && *key != '\0') {
        api_key_ = key;
    }
}

void LlmClient::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
    sleeper_ = std::move(sleeper);
}

HttpHeaders LlmClient::headers() const {
    HttpHeaders h;
    if (api_key_) {
        h.emplace_back("Authorization", "Bearer " + *api_key_);
    }
    return h;
}

std::string LlmClient::post_with_retry(
    const std::string& url, const std::string& body,
    const std::function<std::optional<std::string>(const std::string&)>& extract, int& attempts) {
    if (!transport_ || url.empty()) {
        throw PermanentError("no endpoint configured (cache miss)");
    }
    bool only_connect_failures = true;
    std::string last_error;
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        attempts = attempt;
        HttpReply reply;
        {
            GateHold hold(*gate_);
            network_attempts_.fetch_add(1);
            reply = transport_->post_json(url, body, headers());
        }
        if (reply.failure != TransportFailure::None) {
            if (reply.failure != TransportFailure::ConnectFailed) {
                only_connect_failures = false;
            }
            last_error = describe(reply.failure) + (reply.error.empty() ? "" : ": " + reply.error);
        } else if (reply.status >= 200 && reply.status < 300) {
            if (auto text = extract(reply.body)) {
                return *text;
            }
            only_connect_failures = false;
            last_error = "malformed response body";
        } else if (is_transient_status(reply.status)) {
            only_connect_failures = false;
            last_error = "HTTP " + std::to_string(reply.status);
        } else {
            throw PermanentError("HTTP " + std::to_string(reply.status) + " from " + url + ": " +
                                     reply.body.substr(0, 200),
                                 reply.status);
        }
        log_warn("request attempt " + std::to_string(attempt) + " failed: " + last_error);
        if (attempt < retry_.max_attempts) {
            sleeper_(retry_.delay_after(attempt, jitter_unit()));
        }
    }
    if (only_connect_failures) {
        throw PermanentError("endpoint unreachable: " + url + " (" + last_error + ")");
    }
    throw TransientExhausted("gave up after " + std::to_string(retry_.max_attempts) + " attempts: " + last_error,
                             retry_.max_attempts);
}

ChatResponse LlmClient::complete(const ChatRequest& req) {
    if (auto problems = validate_request(req); !problems.empty()) {
        throw PermanentError("invalid request: " + problems.front());
    }
    json body;
    body["model"] = req.model_name;
    body["messages"] = json::array();
    if (req.system_prompt) {
        body["messages"].push_back({{"role", "system"}, {"content", *req.system_prompt}});
    }
    body["messages"].push_back({{"role", "user"}, {"content", req.user_prompt}});
    body["temperature"] = req.temperature;
    body["top_p"] = req.top_p;
    body["max_tokens"] = req.max_tokens;

    const auto started = std::chrono::steady_clock::now();
    ChatResponse resp;
    resp.text = post_with_retry(normalize_chat_url(config_.endpoint_url), dump_line(body), extract_chat_text,
                                resp.attempt_count);
    resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
    return resp;
}

ChatResponse LlmClient::cached_complete(const ChatRequest& req) {
    const auto key = request_cache_key(req);
    const auto started = std::chrono::steady_clock::now();
    if (auto hit = cache_.load(key)) {
        ChatResponse resp;
        resp.text = std::move(*hit);
        resp.from_cache = true;
        resp.attempt_count = 1;
        resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - started)
                              .count();
        return resp;
    }
    auto resp = complete(req);
    cache_.store(key, request_to_json(req), resp.text);
    return resp;
}

std::vector<double> LlmClient::embed(const std::string& text) {
    const auto& model = config_.embedding_model.empty() ? config_.model_name : config_.embedding_model;
    const auto key = cache_key(model, "[embedding]\n" + text, 0.0, 1.0, 1);
    auto to_vector = [](const std::string& stored) -> std::optional<std::vector<double>> {
        auto arr = json::parse(stored, nullptr, false);
        if (arr.is_discarded() || !arr.is_array() || arr.empty()) {
            return std::nullopt;
        }
        std::vector<double> v;
        v.reserve(arr.size());
        for (const auto& x : arr) {
            if (!x.is_number()) {
                return std::nullopt;
            }
            v.push_back(x.get<double>());
        }
        return v;
    };
    if (auto hit = cache_.load(key)) {
        if (auto v = to_vector(*hit)) {
            return *v;
        }
    }
    if (config_.embedding_endpoint_url.empty()) {
        throw PermanentError("no embedding endpoint configured (cache miss)");
    }
    json body{{"model", model}, {"input", text}};
    int attempts = 0;
    const auto stored = post_with_retry(config_.embedding_endpoint_url, dump_line(body), extract_embedding, attempts);
    json request{{"model", model}, {"embedding_input", text}};
    cache_.store(key, dump_line(request), stored);
    return *to_vector(stored);
}

} // namespace factpipe
