#pragma once

#include "factpipe/llm_client.hpp"
#include "factpipe/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace factpipe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitPermanent = 2;
inline constexpr int kExitInvalid = 3;

inline constexpr const char* kEndpointEnv = "FACTPIPE_ENDPOINT";

struct CliContext {
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
    /// Null: a fresh HttpTransport.
    std::shared_ptr<Transport> transport;
};

/// Runs `factpipe <args...>` (args exclude the program name) and returns the
/// process exit code.
[[nodiscard]] int run_cli(const std::vector<std::string>& args, const CliContext& ctx = {});

/// "key = value" lines; '#' starts a comment; values may be double-quoted.
/// Throws ValidationError naming the line on malformed input.
[[nodiscard]] std::map<std::string, std::string> parse_config_text(std::string_view text);

/// Applies config-file keys (model, endpoint, temperature, top_p, max_tokens,
/// top_k, concurrency, cache_dir, nli_threshold, retry_max_attempts,
/// retry_base_ms, request_timeout_s, embedding_endpoint, embedding_model).
/// Throws ValidationError on unknown keys or bad values.
void apply_config_values(RunConfig& config, const std::map<std::string, std::string>& values);

/// Defaults overridden by the environment (FACTPIPE_ENDPOINT).
[[nodiscard]] RunConfig config_from_environment();

/// Reads and validates a dataset; messages carry "<path>:<line>".
[[nodiscard]] std::vector<Document> load_dataset(const std::filesystem::path& path);

} // namespace factpipe
