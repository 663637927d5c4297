#include "factpipe/decomposer.hpp"

#include "factpipe/concurrency.hpp"
#include "factpipe/error.hpp"
#include "factpipe/hashing.hpp"
#include "factpipe/log.hpp"
#include "factpipe/text.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace factpipe {

namespace {

constexpr std::array<std::string_view, 3> kPlaceholders = {
    kSentencePlaceholder, kResponseContextPlaceholder, kQuestionContextPlaceholder};

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) {
        return 0;
    }
    std::size_t count = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++count;
    }
    return count;
}

bool is_header_key_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// "#key: value" -> (key, value)
std::optional<std::pair<std::string_view, std::string_view>> header_line(std::string_view line) {
    if (line.size() < 2 || line[0] != '#') {
        return std::nullopt;
    }
    std::size_t i = 1;
    while (i < line.size() && is_header_key_char(line[i])) {
        ++i;
    }
    if (i == 1 || i >= line.size() || line[i] != ':') {
        return std::nullopt;
    }
    return std::pair{line.substr(1, i - 1), trim(line.substr(i + 1))};
}

std::string join_lines(const std::vector<std::string_view>& lines, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) {
            out += '\n';
        }
        out += lines[i];
    }
    return out;
}

std::string substitute(std::string_view text, std::string_view sentence, std::string_view response_context,
                       std::string_view question_context) {
    std::string out;
    out.reserve(text.size() + sentence.size() + response_context.size() + question_context.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto brace = text.find('{', pos);
        if (brace == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, brace - pos));
        const auto rest = text.substr(brace);
        if (rest.starts_with(kSentencePlaceholder)) {
            out.append(sentence);
            pos = brace + kSentencePlaceholder.size();
        } else if (rest.starts_with(kResponseContextPlaceholder)) {
            out.append(response_context);
            pos = brace + kResponseContextPlaceholder.size();
        } else if (rest.starts_with(kQuestionContextPlaceholder)) {
            out.append(question_context);
            pos = brace + kQuestionContextPlaceholder.size();
        } else {
            out.push_back('{');
            pos = brace + 1;
        }
    }
    return out;
}

bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }

// Length of a leading list marker including the whitespace after it, or 0.
std::size_t list_marker_length(std::string_view line) {
    std::size_t i = 0;
    if (line.starts_with("\xE2\x80\xA2")) { // •
        i = 3;
    } else if (!line.empty() && (line[0] == '-' || line[0] == '*' || line[0] == '+')) {
        i = 1;
    } else if (!line.empty() && line[0] == '(') {
        std::size_t j = 1;
        while (j < line.size() && is_ascii_digit(line[j])) {
            ++j;
        }
        if (j == 1 || j >= line.size() || line[j] != ')') {
            return 0;
        }
        i = j + 1;
    } else {
        std::size_t j = 0;
        while (j < line.size() && is_ascii_digit(line[j])) {
            ++j;
        }
        if (j == 0 || j >= line.size() || (line[j] != '.' && line[j] != ')')) {
            return 0;
        }
        i = j + 1;
    }
    if (i < line.size() && !is_space(line[i])) {
        return 0;
    }
    while (i < line.size() && is_space(line[i])) {
        ++i;
    }
    return i;
}

} // namespace

std::vector<std::string> validate_template(const PromptTemplate& tmpl) {
    std::vector<std::string> out;
    if (tmpl.name.empty()) {
        out.emplace_back("name: empty");
    }
    if (tmpl.zero_claim_marker.empty()) {
        out.emplace_back("zero_claim_marker: empty");
    }
    if (count_occurrences(tmpl.body_text, kSentencePlaceholder) == 0) {
        out.emplace_back("body_text: missing {sentence} placeholder");
    }
    for (auto ph : kPlaceholders) {
        auto n = count_occurrences(tmpl.body_text, ph);
        if (tmpl.system_text) {
            n += count_occurrences(*tmpl.system_text, ph);
        }
        if (n > 1) {
            out.push_back(std::string("placeholder ") + std::string(ph) + " appears more than once");
        }
    }
    return out;
}

PromptTemplate parse_template(std::string_view file_text) {
    auto lines = split_lines(file_text);
    if (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    PromptTemplate tmpl;
    std::size_t i = 0;
    for (; i < lines.size(); ++i) {
        auto header = header_line(lines[i]);
        if (!header) {
            break;
        }
        const auto [key, value] = *header;
        if (key == "name") {
            tmpl.name = std::string(value);
        } else if (key == "zero_claim_marker") {
            tmpl.zero_claim_marker = std::string(value);
        } else {
            throw TemplateError("unknown template header '#" + std::string(key) + "'");
        }
    }
    if (i < lines.size() && lines[i] == "#system") {
        std::size_t body = i + 1;
        while (body < lines.size() && lines[body] != "#body") {
            ++body;
        }
        if (body == lines.size()) {
            throw TemplateError("#system section without a following #body line");
        }
        tmpl.system_text = join_lines(lines, i + 1, body);
        i = body + 1;
    }
    tmpl.body_text = join_lines(lines, i, lines.size());
    if (auto problems = validate_template(tmpl); !problems.empty()) {
        throw TemplateError("invalid template: " + problems.front());
    }
    return tmpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TemplateError("cannot open template " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_template(buf.str());
    } catch (const TemplateError& e) {
        throw TemplateError(path.string() + ": " + e.what());
    }
}

std::string serialize_template(const PromptTemplate& tmpl) {
    std::string out = "#name: " + tmpl.name + "\n#zero_claim_marker: " + tmpl.zero_claim_marker + "\n";
    if (tmpl.system_text) {
        out += "#system\n" + *tmpl.system_text + "\n#body\n";
    }
    out += tmpl.body_text;
    out += '\n';
    return out;
}

std::string template_digest(const PromptTemplate& tmpl) { return sha256_hex(serialize_template(tmpl)); }

ChatRequest build_decomposition_prompt(const Sentence& sentence, std::string_view response_context,
                                       std::string_view question_context, const PromptTemplate& tmpl,
                                       const RunConfig& config) {
    if (count_occurrences(tmpl.body_text, kSentencePlaceholder) == 0) {
        throw TemplateError("template '" + tmpl.name + "' has no {sentence} placeholder");
    }
    std::optional<std::string> system;
    if (tmpl.system_text) {
        system = substitute(*tmpl.system_text, sentence.text, response_context, question_context);
    }
    return make_request(config, substitute(tmpl.body_text, sentence.text, response_context, question_context),
                        std::move(system));
}

PromptTemplate adapt_template_domain(const PromptTemplate& tmpl, std::string_view old_phrase,
                                     std::string_view new_phrase) {
    if (old_phrase.empty()) {
        throw AdaptError("old phrase is empty");
    }
    const auto in_body = count_occurrences(tmpl.body_text, old_phrase);
    const auto in_system = tmpl.system_text ? count_occurrences(*tmpl.system_text, old_phrase) : 0;
    if (in_body + in_system != 1) {
        throw AdaptError("phrase '" + std::string(old_phrase) + "' occurs " + std::to_string(in_body + in_system) +
                         " times in template '" + tmpl.name + "', expected exactly once");
    }
    PromptTemplate out = tmpl;
    auto& text = in_body == 1 ? out.body_text : *out.system_text;
    text.replace(text.find(old_phrase), old_phrase.size(), new_phrase);
    out.name += "-adapted";
    return out;
}

ParsedClaims parse_claims(std::string_view raw_output, std::string_view zero_claim_marker) {
    ParsedClaims out;
    const auto marker = to_lower_ascii(trim(zero_claim_marker));
    for (auto line : split_lines(raw_output)) {
        if (!marker.empty() && to_lower_ascii(line).find(marker) != std::string::npos) {
            out.zero_claim_marker_seen = true;
            continue;
        }
        auto body = trim(line);
        body = trim(body.substr(list_marker_length(body)));
        if (body.empty()) {
            continue;
        }
        if (body.size() > kMaxClaimLength) {
            ++out.dropped_lines;
            continue;
        }
        out.claims.emplace_back(body);
    }
    if (out.zero_claim_marker_seen) {
        out.claims.clear();
    }
    return out;
}

std::vector<Sentence> segment(std::string_view response, Segmentation mode) {
    return mode == Segmentation::Sentences ? split_sentences(response) : whole_text_unit(response);
}

std::string full_question_context(const Document& doc) {
    std::string out = doc.question;
    if (doc.question_context && !trim(*doc.question_context).empty()) {
        if (!out.empty()) {
            out += '\n';
        }
        out += *doc.question_context;
    }
    return out;
}

namespace {

DecompositionResult decompose_unit(const Document& doc, const Sentence& sentence, const std::string& question_context,
                                   const PromptTemplate& tmpl, LlmClient& client) {
    DecompositionResult result;
    result.document_id = doc.id;
    result.sentence_index = sentence.index;
    const auto req = build_decomposition_prompt(sentence, doc.response, question_context, tmpl, client.config());
    try {
        result.raw_output = client.cached_complete(req).text;
    } catch (const TransientExhausted& e) {
        result.failed = true;
        result.error = e.what();
        log_warn("document " + doc.id + " sentence " + std::to_string(sentence.index) +
                 " failed and is excluded from metrics: " + e.what());
        return result;
    }
    auto parsed = parse_claims(result.raw_output, tmpl.zero_claim_marker);
    result.dropped_lines = parsed.dropped_lines;
    for (std::size_t ordinal = 0; ordinal < parsed.claims.size(); ++ordinal) {
        Claim c;
        c.id = make_claim_id(doc.id, sentence.index, ordinal);
        c.document_id = doc.id;
        c.sentence_index = sentence.index;
        c.text = std::move(parsed.claims[ordinal]);
        result.claims.push_back(std::move(c));
    }
    result.zero_claim = result.claims.empty();
    return result;
}

} // namespace

std::vector<DecompositionResult> decompose_document(const Document& doc, const PromptTemplate& tmpl,
                                                    Segmentation mode, LlmClient& client) {
    auto all = decompose_documents(std::span<const Document>(&doc, 1), tmpl, mode, client);
    return std::move(all.front());
}

std::vector<std::vector<DecompositionResult>> decompose_documents(std::span<const Document> docs,
                                                                  const PromptTemplate& tmpl, Segmentation mode,
                                                                  LlmClient& client) {
    struct Unit {
        std::size_t doc;
        Sentence sentence;
    };
    std::vector<std::vector<DecompositionResult>> out(docs.size());
    std::vector<std::string> question_contexts(docs.size());
    std::vector<Unit> units;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        auto sentences = segment(docs[d].response, mode);
        out[d].resize(sentences.size());
        question_contexts[d] = full_question_context(docs[d]);
        for (auto& s : sentences) {
            units.push_back({d, std::move(s)});
        }
    }
    parallel_for(units.size(), static_cast<std::size_t>(client.config().concurrency_limit), [&](std::size_t i) {
        const auto& u = units[i];
        out[u.doc][u.sentence.index] = decompose_unit(docs[u.doc], u.sentence, question_contexts[u.doc], tmpl, client);
    });
    return out;
}

} // namespace factpipe
