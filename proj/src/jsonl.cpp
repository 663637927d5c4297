#include "factpipe/jsonl.hpp"

#include "factpipe/error.hpp"
#include "factpipe/text.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace factpipe {

namespace {

const json& require(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) {
        throw ValidationError(std::string(field) + ": missing");
    }
    return *it;
}

std::string require_string(const json& j, const char* field) {
    const auto& v = require(j, field);
    if (!v.is_string()) {
        throw ValidationError(std::string(field) + ": expected string");
    }
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_string()) {
        throw ValidationError(std::string(field) + ": expected string or null");
    }
    return it->get<std::string>();
}

bool require_bool(const json& j, const char* field) {
    const auto& v = require(j, field);
    if (!v.is_boolean()) {
        throw ValidationError(std::string(field) + ": expected bool");
    }
    return v.get<bool>();
}

std::size_t require_index(const json& j, const char* field) {
    const auto& v = require(j, field);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ValidationError(std::string(field) + ": expected non-negative integer");
    }
    return v.get<std::size_t>();
}

json optional_json(const std::optional<std::string>& v) {
    return v ? json(*v) : json(nullptr);
}

} // namespace

json to_json(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["question"] = doc.question;
    j["question_context"] = optional_json(doc.question_context);
    j["reference_response"] = optional_json(doc.reference_response);
    j["response"] = doc.response;
    if (doc.span_annotations) {
        json spans = json::array();
        for (const auto& s : *doc.span_annotations) {
            spans.push_back({{"char_start", s.char_start},
                             {"char_end", s.char_end},
                             {"label", std::string(to_string(s.label))}});
        }
        j["span_annotations"] = std::move(spans);
    } else {
        j["span_annotations"] = nullptr;
    }
    return j;
}

Document document_from_json(const json& j) {
    if (!j.is_object()) {
        throw ValidationError("expected a JSON object");
    }
    Document doc;
    doc.id = require_string(j, "id");
    doc.question = require_string(j, "question");
    doc.question_context = optional_string(j, "question_context");
    doc.reference_response = optional_string(j, "reference_response");
    doc.response = require_string(j, "response");
    auto it = j.find("span_annotations");
    if (it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw ValidationError("span_annotations: expected array or null");
        }
        std::vector<SpanAnnotation> spans;
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& s = (*it)[i];
            const auto prefix = "span_annotations[" + std::to_string(i) + "].";
            if (!s.is_object()) {
                throw ValidationError("span_annotations[" + std::to_string(i) + "]: expected object");
            }
            SpanAnnotation span;
            try {
                span.char_start = require_index(s, "char_start");
                span.char_end = require_index(s, "char_end");
                const auto label = require_string(s, "label");
                auto parsed = parse_span_label(label);
                if (!parsed) {
                    throw ValidationError("label: unknown value '" + label + "'");
                }
                span.label = *parsed;
            } catch (const ValidationError& e) {
                throw ValidationError(prefix + e.what());
            }
            spans.push_back(span);
        }
        doc.span_annotations = std::move(spans);
    }
    return doc;
}

json to_json(const Claim& claim) {
    json j;
    j["id"] = claim.id;
    j["document_id"] = claim.document_id;
    j["sentence_index"] = claim.sentence_index;
    j["text"] = claim.text;
    if (!claim.taxonomy_labels.empty()) {
        json labels = json::array();
        for (auto l : claim.taxonomy_labels) {
            labels.push_back(std::string(to_string(l)));
        }
        j["taxonomy_labels"] = std::move(labels);
    }
    return j;
}

Claim claim_from_json(const json& j) {
    if (!j.is_object()) {
        throw ValidationError("expected a JSON object");
    }
    Claim c;
    c.id = require_string(j, "id");
    c.document_id = require_string(j, "document_id");
    c.sentence_index = require_index(j, "sentence_index");
    c.text = std::string(trim(require_string(j, "text")));
    if (c.id.empty()) {
        throw ValidationError("id: empty");
    }
    if (c.text.empty()) {
        throw ValidationError("text: empty");
    }
    if (c.text.find('\n') != std::string::npos || c.text.find('\r') != std::string::npos) {
        throw ValidationError("text: must be a single line");
    }
    auto it = j.find("taxonomy_labels");
    if (it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw ValidationError("taxonomy_labels: expected array");
        }
        for (const auto& l : *it) {
            auto parsed = l.is_string() ? parse_taxonomy_label(l.get<std::string>()) : std::nullopt;
            if (!parsed) {
                throw ValidationError("taxonomy_labels: unknown label " + l.dump());
            }
            c.taxonomy_labels.insert(*parsed);
        }
        auto problems = validate_claim_labels(c.taxonomy_labels);
        if (!problems.empty()) {
            throw ValidationError(problems.front());
        }
    }
    return c;
}

json to_json(const Verdict& v) {
    json j;
    j["claim_id"] = v.claim_id;
    j["value"] = v.value;
    j["strategy"] = std::string(to_string(v.strategy));
    j["parse_ok"] = v.parse_ok;
    j["retrieved_snippet_ids"] = v.retrieved_snippet_ids ? json(*v.retrieved_snippet_ids) : json(nullptr);
    j["raw_output"] = v.raw_output;
    return j;
}

Verdict verdict_from_json(const json& j) {
    if (!j.is_object()) {
        throw ValidationError("expected a JSON object");
    }
    Verdict v;
    v.claim_id = require_string(j, "claim_id");
    v.value = require_bool(j, "value");
    const auto strategy = require_string(j, "strategy");
    auto parsed = parse_strategy(strategy);
    if (!parsed) {
        throw ValidationError("strategy: unknown value '" + strategy + "'");
    }
    v.strategy = *parsed;
    v.parse_ok = require_bool(j, "parse_ok");
    v.raw_output = require_string(j, "raw_output");
    auto it = j.find("retrieved_snippet_ids");
    if (it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw ValidationError("retrieved_snippet_ids: expected array or null");
        }
        std::vector<std::string> ids;
        for (const auto& id : *it) {
            if (!id.is_string()) {
                throw ValidationError("retrieved_snippet_ids: expected strings");
            }
            ids.push_back(id.get<std::string>());
        }
        v.retrieved_snippet_ids = std::move(ids);
    }
    auto problems = validate_verdict(v);
    if (!problems.empty()) {
        throw ValidationError(problems.front());
    }
    return v;
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        try {
            fn(json::parse(line), line_no);
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::vector<Document> read_documents(const std::filesystem::path& path) {
    std::vector<Document> docs;
    for_each_jsonl(path, [&](const json& j, std::size_t) { docs.push_back(document_from_json(j)); });
    return docs;
}

std::vector<Claim> read_claims(const std::filesystem::path& path) {
    std::vector<Claim> claims;
    for_each_jsonl(path, [&](const json& j, std::size_t) { claims.push_back(claim_from_json(j)); });
    return claims;
}

std::vector<Verdict> read_verdicts(const std::filesystem::path& path) {
    std::vector<Verdict> verdicts;
    for_each_jsonl(path, [&](const json& j, std::size_t) { verdicts.push_back(verdict_from_json(j)); });
    return verdicts;
}

std::string dump_line(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << ::getpid() << "." << std::hash<std::thread::id>{}(std::this_thread::get_id())
             << "." << counter.fetch_add(1);
    const auto tmp = path.parent_path() / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace factpipe
