#include "factpipe/retriever.hpp"

#include "factpipe/error.hpp"
#include "factpipe/hashing.hpp"
#include "factpipe/jsonl.hpp"
#include "factpipe/log.hpp"
#include "factpipe/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_set>

namespace factpipe {

namespace {

bool is_ascii_punct(char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

// Contribution of one query term to one snippet.
double term_weight(double idf, std::uint32_t tf, std::uint32_t doc_length, double avg_doc_length) {
    const double norm = avg_doc_length > 0.0 ? static_cast<double>(doc_length) / avg_doc_length : 1.0;
    const double f = static_cast<double>(tf);
    return idf * (f * (kBm25K1 + 1.0)) / (f + kBm25K1 * (1.0 - kBm25B + kBm25B * norm));
}

// Score descending, then id ascending.
bool ranks_before(double score_a, const std::string& id_a, double score_b, const std::string& id_b) {
    if (score_a != score_b) {
        return score_a > score_b;
    }
    return id_a < id_b;
}

} // namespace

std::vector<std::string> tokenize_terms(std::string_view text) {
    std::vector<std::string> terms;
    std::string current;
    for (char c : text) {
        if (is_space(c)) {
            if (!current.empty()) {
                terms.push_back(std::move(current));
                current.clear();
            }
        } else if (!is_ascii_punct(c)) {
            current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
        }
    }
    if (!current.empty()) {
        terms.push_back(std::move(current));
    }
    return terms;
}

std::string indexed_text(const Snippet& snippet) {
    if (snippet.title && !snippet.title->empty()) {
        return *snippet.title + "\n" + snippet.content;
    }
    return snippet.content;
}

// CorpusIndex ------------------------------------------------------------------

CorpusIndex CorpusIndex::build(std::vector<Snippet> snippets) {
    CorpusIndex index;
    index.snippets_ = std::move(snippets);
    index.finalize();
    return index;
}

void CorpusIndex::finalize() {
    by_id_.clear();
    inverted_.clear();
    doc_lengths_.assign(snippets_.size(), 0);
    has_embeddings_ = !snippets_.empty();
    dimension_ = 0;
    double total_length = 0.0;
    for (std::size_t i = 0; i < snippets_.size(); ++i) {
        const auto& s = snippets_[i];
        if (s.id.empty()) {
            throw IngestError("<corpus>", 0, "snippet " + std::to_string(i) + " has an empty id");
        }
        if (trim(s.content).empty()) {
            throw IngestError("<corpus>", 0, "snippet '" + s.id + "' has empty content");
        }
        if (!by_id_.emplace(s.id, i).second) {
            throw IngestError("<corpus>", 0, "duplicate snippet id '" + s.id + "'");
        }
        if (s.embedding) {
            if (dimension_ == 0) {
                dimension_ = s.embedding->size();
            } else if (s.embedding->size() != dimension_) {
                throw IngestError("<corpus>", 0, "snippet '" + s.id + "' embedding dimension " +
                                                     std::to_string(s.embedding->size()) + " != " +
                                                     std::to_string(dimension_));
            }
        } else {
            has_embeddings_ = false;
        }
        std::map<std::string, std::uint32_t> tf;
        const auto terms = tokenize_terms(indexed_text(s));
        for (const auto& t : terms) {
            ++tf[t];
        }
        for (const auto& [term, count] : tf) {
            inverted_[term].push_back({static_cast<std::uint32_t>(i), count});
        }
        doc_lengths_[i] = static_cast<std::uint32_t>(terms.size());
        total_length += static_cast<double>(terms.size());
    }
    avg_doc_length_ = snippets_.empty() ? 0.0 : total_length / static_cast<double>(snippets_.size());
}

std::optional<std::size_t> CorpusIndex::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const Posting> CorpusIndex::postings(const std::string& term) const {
    auto it = inverted_.find(term);
    if (it == inverted_.end()) {
        return {};
    }
    return it->second;
}

std::uint32_t CorpusIndex::term_frequency(const std::string& term, std::size_t ordinal) const {
    const auto list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                               [](const Posting& p, std::size_t o) { return p.ordinal < o; });
    if (it == list.end() || it->ordinal != ordinal) {
        return 0;
    }
    return it->term_frequency;
}

// Binary index -----------------------------------------------------------------

namespace {

constexpr char kIndexMagic[8] = {'F', 'P', 'I', 'D', 'X', '\0', '\0', '\0'};
constexpr std::uint32_t kIndexVersion = 1;

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}
    template <typename T>
    void pod(const T& v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
    void str(const std::string& s) {
        pod<std::uint64_t>(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    explicit Reader(std::ifstream& in) : in_(in) {}
    template <typename T>
    T pod() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) {
            throw Error("truncated index file");
        }
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        if (n > (1ULL << 32)) {
            throw Error("corrupt index file");
        }
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) {
            throw Error("truncated index file");
        }
        return s;
    }

private:
    std::ifstream& in_;
};

} // namespace

void CorpusIndex::save(const std::filesystem::path& path, const std::string& digest) const {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + tmp);
        }
        Writer w(out);
        out.write(kIndexMagic, sizeof(kIndexMagic));
        w.pod(kIndexVersion);
        w.str(digest);
        w.pod<std::uint64_t>(snippets_.size());
        for (const auto& s : snippets_) {
            w.str(s.id);
            w.pod<std::uint8_t>(s.title ? 1 : 0);
            if (s.title) {
                w.str(*s.title);
            }
            w.str(s.content);
            w.pod<std::uint64_t>(s.embedding ? s.embedding->size() : 0);
            w.pod<std::uint8_t>(s.embedding ? 1 : 0);
            if (s.embedding) {
                out.write(reinterpret_cast<const char*>(s.embedding->data()),
                          static_cast<std::streamsize>(s.embedding->size() * sizeof(double)));
            }
        }
        // Inverted index, terms in sorted order for reproducible files.
        std::vector<const std::string*> terms;
        terms.reserve(inverted_.size());
        for (const auto& [term, _] : inverted_) {
            terms.push_back(&term);
        }
        std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
        w.pod<std::uint64_t>(terms.size());
        for (const auto* term : terms) {
            const auto& list = inverted_.at(*term);
            w.str(*term);
            w.pod<std::uint64_t>(list.size());
            for (const auto& p : list) {
                w.pod(p.ordinal);
                w.pod(p.term_frequency);
            }
        }
        for (auto len : doc_lengths_) {
            w.pod(len);
        }
        if (!out) {
            throw Error("write failed: " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

std::optional<CorpusIndex> CorpusIndex::load(const std::filesystem::path& path, const std::string& expected_digest) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    try {
        char magic[sizeof(kIndexMagic)] = {};
        in.read(magic, sizeof(magic));
        if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kIndexMagic))) {
            return std::nullopt;
        }
        Reader r(in);
        if (r.pod<std::uint32_t>() != kIndexVersion || r.str() != expected_digest) {
            return std::nullopt;
        }
        CorpusIndex index;
        const auto n = r.pod<std::uint64_t>();
        index.snippets_.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            Snippet s;
            s.id = r.str();
            if (r.pod<std::uint8_t>() != 0) {
                s.title = r.str();
            }
            s.content = r.str();
            const auto dim = r.pod<std::uint64_t>();
            if (r.pod<std::uint8_t>() != 0) {
                std::vector<double> v(dim);
                in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(double)));
                if (!in) {
                    return std::nullopt;
                }
                s.embedding = std::move(v);
            }
            index.snippets_.push_back(std::move(s));
        }
        const auto term_count = r.pod<std::uint64_t>();
        for (std::uint64_t t = 0; t < term_count; ++t) {
            auto term = r.str();
            const auto len = r.pod<std::uint64_t>();
            std::vector<Posting> list(len);
            for (auto& p : list) {
                p.ordinal = r.pod<std::uint32_t>();
                p.term_frequency = r.pod<std::uint32_t>();
            }
            index.inverted_.emplace(std::move(term), std::move(list));
        }
        index.doc_lengths_.resize(n);
        double total = 0.0;
        for (auto& len : index.doc_lengths_) {
            len = r.pod<std::uint32_t>();
            total += static_cast<double>(len);
        }
        index.avg_doc_length_ = n == 0 ? 0.0 : total / static_cast<double>(n);
        index.has_embeddings_ = n > 0;
        for (std::size_t i = 0; i < index.snippets_.size(); ++i) {
            const auto& s = index.snippets_[i];
            index.by_id_.emplace(s.id, i);
            if (!s.embedding) {
                index.has_embeddings_ = false;
            } else if (index.dimension_ == 0) {
                index.dimension_ = s.embedding->size();
            }
        }
        return index;
    } catch (const Error&) {
        return std::nullopt;
    }
}

// Ingestion ----------------------------------------------------------------------

std::filesystem::path embedding_sidecar_path(const std::filesystem::path& corpus) {
    return corpus.parent_path() / (corpus.stem().string() + ".emb.jsonl");
}

std::filesystem::path binary_index_path(const std::filesystem::path& first_corpus, const std::string& digest) {
    return first_corpus.parent_path() / (first_corpus.stem().string() + "." + digest.substr(0, 16) + ".fpidx");
}

std::string corpus_digest(std::span<const std::filesystem::path> paths) {
    Sha256 h;
    for (const auto& p : paths) {
        std::error_code ec;
        const auto size = std::filesystem::file_size(p, ec);
        if (ec) {
            throw IngestError(p.string(), 0, "cannot open corpus");
        }
        h.update("corpus\n" + p.filename().string() + "\n");
        h.update(std::to_string(size) + "\n");
        h.update_file(p);
        const auto sidecar = embedding_sidecar_path(p);
        if (std::filesystem::exists(sidecar)) {
            h.update("sidecar\n" + std::to_string(std::filesystem::file_size(sidecar)) + "\n");
            h.update_file(sidecar);
        }
    }
    return h.hex_digest();
}

namespace {

std::vector<Snippet> read_corpus_file(const std::filesystem::path& path, const std::string& id_prefix) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestError(path.string(), 0, "cannot open corpus");
    }
    std::vector<Snippet> snippets;
    std::unordered_map<std::string, std::size_t> by_id;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw IngestError(path.string(), line_no, "malformed JSON");
        }
        Snippet s;
        auto id = j.find("id");
        auto content = j.find("content");
        if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
            throw IngestError(path.string(), line_no, "id: expected non-empty string");
        }
        if (content == j.end() || !content->is_string() || trim(content->get<std::string>()).empty()) {
            throw IngestError(path.string(), line_no, "content: expected non-empty string");
        }
        if (auto title = j.find("title"); title != j.end() && !title->is_null()) {
            if (!title->is_string()) {
                throw IngestError(path.string(), line_no, "title: expected string or null");
            }
            s.title = title->get<std::string>();
        }
        s.id = id->get<std::string>();
        s.content = content->get<std::string>();
        if (!by_id.emplace(s.id, snippets.size()).second) {
            throw IngestError(path.string(), line_no, "duplicate id '" + s.id + "'");
        }
        snippets.push_back(std::move(s));
    }

    const auto sidecar = embedding_sidecar_path(path);
    std::ifstream emb(sidecar, std::ios::binary);
    if (emb) {
        std::size_t dimension = 0;
        line_no = 0;
        while (std::getline(emb, line)) {
            ++line_no;
            if (trim(line).empty()) {
                continue;
            }
            auto j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                throw IngestError(sidecar.string(), line_no, "malformed JSON");
            }
            auto id = j.find("id");
            auto vec = j.find("vector");
            if (id == j.end() || !id->is_string()) {
                throw IngestError(sidecar.string(), line_no, "id: expected string");
            }
            if (vec == j.end() || !vec->is_array() || vec->empty()) {
                throw IngestError(sidecar.string(), line_no, "vector: expected non-empty array");
            }
            auto it = by_id.find(id->get<std::string>());
            if (it == by_id.end()) {
                throw IngestError(sidecar.string(), line_no, "unknown snippet id '" + id->get<std::string>() + "'");
            }
            std::vector<double> v;
            v.reserve(vec->size());
            for (const auto& x : *vec) {
                if (!x.is_number()) {
                    throw IngestError(sidecar.string(), line_no, "vector: expected numbers");
                }
                v.push_back(x.get<double>());
            }
            if (dimension == 0) {
                dimension = v.size();
            } else if (v.size() != dimension) {
                throw IngestError(sidecar.string(), line_no,
                                  "embedding dimension " + std::to_string(v.size()) + " != " +
                                      std::to_string(dimension));
            }
            auto& target = snippets[it->second].embedding;
            if (target) {
                throw IngestError(sidecar.string(), line_no, "duplicate embedding for '" + it->first + "'");
            }
            target = std::move(v);
        }
    }
    if (!id_prefix.empty()) {
        for (auto& s : snippets) {
            s.id = id_prefix + s.id;
        }
    }
    return snippets;
}

} // namespace

CorpusIndex ingest_corpus(const std::filesystem::path& path) {
    const std::filesystem::path paths[] = {path};
    return ingest_corpora(paths, {});
}

CorpusIndex ingest_corpora(std::span<const std::filesystem::path> paths, const IngestOptions& options) {
    if (paths.empty()) {
        throw IngestError("<corpus>", 0, "no corpus files given");
    }
    std::string digest;
    std::filesystem::path bin;
    if (options.binary_index_min_snippets > 0) {
        digest = corpus_digest(paths);
        bin = binary_index_path(paths.front(), digest);
        if (auto cached = CorpusIndex::load(bin, digest)) {
            log_info("loaded binary index " + bin.string());
            return std::move(*cached);
        }
    }
    std::vector<Snippet> all;
    std::unordered_set<std::string> stems;
    for (const auto& p : paths) {
        const auto prefix = paths.size() > 1 ? p.stem().string() + ":" : std::string();
        if (paths.size() > 1 && !stems.insert(p.stem().string()).second) {
            throw IngestError(p.string(), 0, "two corpora share the name '" + p.stem().string() + "'");
        }
        auto part = read_corpus_file(p, prefix);
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    auto index = CorpusIndex::build(std::move(all));
    if (options.binary_index_min_snippets > 0 && index.size() >= options.binary_index_min_snippets) {
        try {
            index.save(bin, digest);
        } catch (const std::exception& e) {
            log_warn(std::string("could not write binary index: ") + e.what());
        }
    }
    return index;
}

// Scoring ------------------------------------------------------------------------

double bm25_idf(std::size_t corpus_size, std::size_t document_frequency) {
    const double n = static_cast<double>(corpus_size);
    const double df = static_cast<double>(document_frequency);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double bm25_score(const CorpusIndex& index, std::span<const std::string> query_terms, std::size_t snippet_ordinal) {
    if (snippet_ordinal >= index.size()) {
        throw Error("bm25_score: snippet ordinal out of range");
    }
    double score = 0.0;
    for (const auto& term : query_terms) {
        const auto df = index.document_frequency(term);
        if (df == 0) {
            continue;
        }
        const auto tf = index.term_frequency(term, snippet_ordinal);
        if (tf == 0) {
            continue;
        }
        score += term_weight(bm25_idf(index.size(), df), tf, index.doc_lengths()[snippet_ordinal],
                             index.avg_doc_length());
    }
    return score;
}

double cosine_score(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("cosine_score: dimensions " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw ZeroVectorError("cosine_score: zero vector");
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

ScoringMode scoring_mode(const CorpusIndex& index, const RetrievalQuery& query) noexcept {
    return index.has_embeddings() && query.embedding ? ScoringMode::Cosine : ScoringMode::Bm25;
}

std::vector<ScoredSnippet> retrieve_topk(const CorpusIndex& index, const RetrievalQuery& query, std::size_t k) {
    if (k == 0) {
        throw Error("retrieve_topk: k must be >= 1");
    }
    const auto n = index.size();
    std::vector<double> scores(n, 0.0);
    if (scoring_mode(index, query) == ScoringMode::Cosine) {
        if (query.embedding->size() != index.embedding_dimension()) {
            throw DimensionError("query embedding dimension " + std::to_string(query.embedding->size()) +
                                 " != corpus dimension " + std::to_string(index.embedding_dimension()));
        }
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = cosine_score(*query.embedding, *index.snippet(i).embedding);
        }
    } else {
        for (const auto& term : tokenize_terms(query.text)) {
            const auto list = index.postings(term);
            if (list.empty()) {
                continue;
            }
            const double idf = bm25_idf(n, list.size());
            for (const auto& p : list) {
                scores[p.ordinal] += term_weight(idf, p.term_frequency, index.doc_lengths()[p.ordinal],
                                                 index.avg_doc_length());
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    const auto take = std::min(k, n);
    auto cmp = [&](std::size_t a, std::size_t b) {
        return ranks_before(scores[a], index.snippet(a).id, scores[b], index.snippet(b).id);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), cmp);

    std::vector<ScoredSnippet> out;
    out.reserve(take);
    for (std::size_t r = 0; r < take; ++r) {
        out.push_back({index.snippet(order[r]).id, scores[order[r]], r + 1});
    }
    return out;
}

std::string build_context(std::span<const ScoredSnippet> scored, const CorpusIndex& index) {
    std::string out;
    for (const auto& s : scored) {
        const auto ordinal = index.find(s.snippet_id);
        if (!ordinal) {
            throw Error("build_context: unknown snippet id '" + s.snippet_id + "'");
        }
        const auto& snippet = index.snippet(*ordinal);
        if (!out.empty()) {
            out += "\n\n";
        }
        if (snippet.title && !snippet.title->empty()) {
            out += "Title: " + *snippet.title + "\n";
        }
        out += snippet.content;
    }
    return out;
}

} // namespace factpipe
