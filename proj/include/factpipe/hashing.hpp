#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace factpipe {

/// Lowercase hex SHA-256 of `data`.
[[nodiscard]] std::string sha256_hex(std::string_view data);

/// SHA-256 over the raw bytes of a file.
[[nodiscard]] std::string file_sha256(const std::filesystem::path& path);

/// Incremental SHA-256 for digests over several inputs.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view data);
    void update_file(const std::filesystem::path& path);
    [[nodiscard]] std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Canonical serialization hashed by cache_key().
[[nodiscard]] std::string cache_key_material(std::string_view model_name, std::string_view prompt_text,
                                             double temperature, double top_p, int max_tokens);

/// 64-character hex digest identifying one cacheable LLM call.
[[nodiscard]] std::string cache_key(std::string_view model_name, std::string_view prompt_text,
                                    double temperature, double top_p, int max_tokens);

} // namespace factpipe
