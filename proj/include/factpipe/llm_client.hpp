#pragma once

#include "factpipe/types.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace factpipe {

struct ChatRequest {
    std::optional<std::string> system_prompt;
    std::string user_prompt;
    std::string model_name;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 256;

    bool operator==(const ChatRequest&) const = default;
};

/// Request carrying the decoding parameters of `config`.
[[nodiscard]] ChatRequest make_request(const RunConfig& config, std::string user_prompt,
                                       std::optional<std::string> system_prompt = std::nullopt);

[[nodiscard]] std::vector<std::string> validate_request(const ChatRequest& req);

/// Prompt text hashed into the cache key. Equal to the user prompt when there
/// is no system prompt, otherwise both parts under "[system]" / "[user]" tags.
[[nodiscard]] std::string canonical_prompt(const ChatRequest& req);
[[nodiscard]] std::string request_cache_key(const ChatRequest& req);

struct ChatResponse {
    std::string text;
    bool from_cache = false;
    std::int64_t latency_ms = 0;
    int attempt_count = 1;
};

// Transport ------------------------------------------------------------------

enum class TransportFailure { None, ConnectFailed, Timeout, ConnectionReset, Other };

struct HttpReply {
    int status = 0;
    std::string body;
    TransportFailure failure = TransportFailure::None;
    std::string error;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// One HTTP POST of a JSON body. Implementations must be callable from
/// several threads at once.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post_json(const std::string& url, const std::string& body,
                                const HttpHeaders& headers) = 0;
};

/// cpp-httplib backed transport.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120));
    HttpReply post_json(const std::string& url, const std::string& body,
                        const HttpHeaders& headers) override;

    /// Requests issued by every HttpTransport in this process.
    [[nodiscard]] static std::uint64_t total_requests() noexcept;

private:
    std::chrono::seconds timeout_;
};

// Retry ----------------------------------------------------------------------

/// Exponential backoff: base * factor^(attempt-1), scaled by a jitter factor
/// drawn uniformly from [1 - jitter, 1 + jitter].
struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base{1000};
    double factor = 2.0;
    double jitter = 0.2;

    /// Delay after failed attempt number `attempt` (1-based). `unit` in [0, 1]
    /// selects the jitter position: 0 gives the minimum, 1 the maximum.
    [[nodiscard]] std::chrono::milliseconds delay_after(int attempt, double unit) const;
};

/// Transient failures (HTTP 429/5xx, timeouts, dropped connections) are retried.
[[nodiscard]] bool is_transient_status(int status) noexcept;

// Cache ----------------------------------------------------------------------

/// Layout: <dir>/<first two hex chars>/<key>.json holding
/// {"request": {...}, "response_text": str, "created_unix": int}.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    [[nodiscard]] std::filesystem::path path_for(const std::string& key) const;
    /// Cached text, or nullopt on a miss or an unreadable/corrupt entry.
    [[nodiscard]] std::optional<std::string> load(const std::string& key) const;
    /// Atomic write (temp file + rename).
    void store(const std::string& key, const std::string& request_json,
               const std::string& response_text) const;

    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
};

[[nodiscard]] std::string request_to_json(const ChatRequest& req);

// Client ---------------------------------------------------------------------

/// Caps the number of concurrent holders.
class InFlightGate {
public:
    explicit InFlightGate(int limit);
    void acquire();
    void release();
    [[nodiscard]] int limit() const noexcept { return limit_; }

private:
    int limit_;
    int in_flight_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

/// The single gateway for every LLM call. Shareable across threads; at most
/// `config.concurrency_limit` HTTP requests of one client are in flight.
class LlmClient {
public:
    /// `transport` may be null, in which case any cache miss raises
    /// PermanentError.
    LlmClient(RunConfig config, std::shared_ptr<Transport> transport);

    [[nodiscard]] ChatResponse complete(const ChatRequest& req);
    [[nodiscard]] ChatResponse cached_complete(const ChatRequest& req);

    /// Embedding vector for `text` from the configured embedding endpoint
    /// (cached like chat completions).
    [[nodiscard]] std::vector<double> embed(const std::string& text);

    [[nodiscard]] const RunConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::uint64_t network_attempts() const noexcept { return network_attempts_.load(); }

    /// Replaces the sleep used between retries (tests).
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

private:
    std::string post_with_retry(const std::string& url, const std::string& body,
                                const std::function<std::optional<std::string>(const std::string&)>& extract,
                                int& attempts);
    [[nodiscard]] HttpHeaders headers() const;

    RunConfig config_;
    std::shared_ptr<Transport> transport_;
    ResponseCache cache_;
    RetryPolicy retry_;
    std::shared_ptr<InFlightGate> gate_;
    std::optional<std::string> api_key_;
    std::function<void(std::chrono::milliseconds)> sleeper_;
    std::atomic<std::uint64_t> network_attempts_{0};
};

/// Environment variable holding the bearer credential.
inline constexpr const char* kApiKeyEnv = "FACTPIPE_API_KEY";

/// Appends "/v1/chat/completions" when `url` has no path.
[[nodiscard]] std::string normalize_chat_url(const std::string& url);

} // namespace factpipe
