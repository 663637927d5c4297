#pragma once

#include "factpipe/jsonl.hpp"
#include "factpipe/llm_client.hpp"
#include "factpipe/retriever.hpp"
#include "factpipe/types.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fptest {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return path_; }
    [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

void write_text(const fs::path& path, const std::string& content);
[[nodiscard]] std::string read_text(const fs::path& path);

[[nodiscard]] fs::path template_path(const std::string& name);

/// Stores `text` as the cached answer to `req` in `config.cache_dir`.
void seed_cache(const factpipe::RunConfig& config, const factpipe::ChatRequest& req, const std::string& text);

/// Config pointing at `cache_dir` with fast retries and no endpoint.
[[nodiscard]] factpipe::RunConfig test_config(const fs::path& cache_dir);

/// Ten medical QA records with references and span annotations; one record
/// has only Experience/Question spans.
[[nodiscard]] std::vector<factpipe::Document> replay_documents();

/// Small medical snippet corpus matching replay_documents().
[[nodiscard]] std::vector<factpipe::Snippet> replay_corpus();

/// Deterministic stand-in for a model: decomposition prompts echo the
/// sentence as claims (questions give the zero-claim marker), verification
/// prompts answer from a hash of the prompt, NLI prompts return a label and
/// score.
[[nodiscard]] std::string scripted_answer(const std::string& user, const std::string& system);

[[nodiscard]] std::string documents_jsonl(const std::vector<factpipe::Document>& docs);
[[nodiscard]] std::string corpus_jsonl(const std::vector<factpipe::Snippet>& snippets);

// Random helpers --------------------------------------------------------------

[[nodiscard]] std::string random_word(std::mt19937_64& rng, std::size_t vocabulary);
[[nodiscard]] std::vector<factpipe::Snippet> random_corpus(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                                           std::size_t vocabulary);

} // namespace fptest
