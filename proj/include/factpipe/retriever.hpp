#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace factpipe {

struct Snippet {
    std::string id;
    std::optional<std::string> title;
    std::string content;
    std::optional<std::vector<double>> embedding;

    bool operator==(const Snippet&) const = default;
};

struct Posting {
    std::uint32_t ordinal = 0;
    std::uint32_t term_frequency = 0;

    bool operator==(const Posting&) const = default;
};

/// Lowercases ASCII, deletes ASCII punctuation, splits on whitespace.
[[nodiscard]] std::vector<std::string> tokenize_terms(std::string_view text);

/// Text indexed for a snippet: title (when present) and content.
[[nodiscard]] std::string indexed_text(const Snippet& snippet);

/// Searchable, immutable passage collection.
class CorpusIndex {
public:
    CorpusIndex() = default;

    /// Throws IngestError (line 0) on duplicate ids, empty content or mixed
    /// embedding dimensions.
    [[nodiscard]] static CorpusIndex build(std::vector<Snippet> snippets);

    [[nodiscard]] std::size_t size() const noexcept { return snippets_.size(); }
    [[nodiscard]] bool empty() const noexcept { return snippets_.empty(); }
    [[nodiscard]] const std::vector<Snippet>& snippets() const noexcept { return snippets_; }
    [[nodiscard]] const Snippet& snippet(std::size_t ordinal) const { return snippets_.at(ordinal); }
    [[nodiscard]] std::optional<std::size_t> find(std::string_view id) const;

    /// Postings sorted by ordinal; empty for unknown terms.
    [[nodiscard]] std::span<const Posting> postings(const std::string& term) const;
    [[nodiscard]] std::size_t document_frequency(const std::string& term) const { return postings(term).size(); }
    [[nodiscard]] std::uint32_t term_frequency(const std::string& term, std::size_t ordinal) const;
    [[nodiscard]] const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
    [[nodiscard]] double avg_doc_length() const noexcept { return avg_doc_length_; }

    /// True iff every snippet has an embedding.
    [[nodiscard]] bool has_embeddings() const noexcept { return has_embeddings_; }
    /// Shared embedding dimension (0 when no snippet has one).
    [[nodiscard]] std::size_t embedding_dimension() const noexcept { return dimension_; }

    /// Versioned binary serialization tagged with `digest`.
    void save(const std::filesystem::path& path, const std::string& digest) const;
    /// Nullopt when the file is missing, of another version, or tagged with a
    /// different digest.
    [[nodiscard]] static std::optional<CorpusIndex> load(const std::filesystem::path& path,
                                                         const std::string& expected_digest);

private:
    std::vector<Snippet> snippets_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::vector<Posting>> inverted_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    bool has_embeddings_ = false;
    std::size_t dimension_ = 0;

    void finalize();
};

struct IngestOptions {
    /// Corpora at least this large get a binary index file written beside the
    /// first corpus file (and reused on later runs).
    std::size_t binary_index_min_snippets = 100000;
};

/// Corpus JSONL ({"id", "title", "content"}) plus the optional embedding
/// sidecar "<stem>.emb.jsonl" ({"id", "vector"}) in the same directory.
/// Throws IngestError with the offending line number.
[[nodiscard]] CorpusIndex ingest_corpus(const std::filesystem::path& path);

/// Several corpora in one index. With more than one file every snippet id is
/// prefixed "<file stem>:".
[[nodiscard]] CorpusIndex ingest_corpora(std::span<const std::filesystem::path> paths,
                                         const IngestOptions& options = {});

[[nodiscard]] std::filesystem::path embedding_sidecar_path(const std::filesystem::path& corpus);
[[nodiscard]] std::filesystem::path binary_index_path(const std::filesystem::path& first_corpus,
                                                      const std::string& digest);

/// Digest over every corpus file and its sidecar, in order.
[[nodiscard]] std::string corpus_digest(std::span<const std::filesystem::path> paths);

// Scoring --------------------------------------------------------------------

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

/// ln(1 + (N - df + 0.5) / (df + 0.5))
[[nodiscard]] double bm25_idf(std::size_t corpus_size, std::size_t document_frequency);

/// Okapi BM25 of one snippet; each query term (duplicates included) adds its
/// weight, terms absent from the corpus add 0.
[[nodiscard]] double bm25_score(const CorpusIndex& index, std::span<const std::string> query_terms,
                                std::size_t snippet_ordinal);

/// dot(a, b) / (|a| |b|). Throws DimensionError or ZeroVectorError.
[[nodiscard]] double cosine_score(std::span<const double> a, std::span<const double> b);

struct ScoredSnippet {
    std::string snippet_id;
    double score = 0.0;
    std::size_t rank = 1;

    bool operator==(const ScoredSnippet&) const = default;
};

struct RetrievalQuery {
    std::string text;
    std::optional<std::vector<double>> embedding;
};

enum class ScoringMode { Bm25, Cosine };

/// Cosine when the index has embeddings and the query carries one.
[[nodiscard]] ScoringMode scoring_mode(const CorpusIndex& index, const RetrievalQuery& query) noexcept;

inline constexpr std::size_t kDefaultTopK = 10;

/// The min(k, N) best snippets by score, ties broken by ascending id.
[[nodiscard]] std::vector<ScoredSnippet> retrieve_topk(const CorpusIndex& index, const RetrievalQuery& query,
                                                       std::size_t k);

/// "Title: <title>\n<content>" blocks in rank order, separated by a blank
/// line. Untitled snippets omit the title line.
[[nodiscard]] std::string build_context(std::span<const ScoredSnippet> scored, const CorpusIndex& index);

} // namespace factpipe
