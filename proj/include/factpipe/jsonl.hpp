#pragma once

#include "factpipe/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace factpipe {

using json = nlohmann::json;

// Schema conversions. from_json throws ValidationError naming the field.

[[nodiscard]] json to_json(const Document& doc);
[[nodiscard]] json to_json(const Claim& claim);
[[nodiscard]] json to_json(const Verdict& verdict);

[[nodiscard]] Document document_from_json(const json& j);
/// Strips surrounding whitespace from text; rejects internal newlines.
[[nodiscard]] Claim claim_from_json(const json& j);
[[nodiscard]] Verdict verdict_from_json(const json& j);

/// Calls `fn(record, line_number)` for every non-blank line. Parse failures
/// and exceptions from `fn` are rethrown as ValidationError prefixed with
/// "<path>:<line>".
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn);

[[nodiscard]] std::vector<Document> read_documents(const std::filesystem::path& path);
[[nodiscard]] std::vector<Claim> read_claims(const std::filesystem::path& path);
[[nodiscard]] std::vector<Verdict> read_verdicts(const std::filesystem::path& path);

/// Serializes a JSON value as one compact line.
[[nodiscard]] std::string dump_line(const json& j);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

template <typename T>
[[nodiscard]] std::string to_jsonl(const std::vector<T>& records) {
    std::string out;
    for (const auto& r : records) {
        out += dump_line(to_json(r));
        out += '\n';
    }
    return out;
}

} // namespace factpipe
