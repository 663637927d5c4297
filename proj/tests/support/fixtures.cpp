#include "fixtures.hpp"

#include "factpipe/hashing.hpp"
#include "factpipe/text.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace fptest {

using namespace factpipe;

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("factpipe-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path template_path(const std::string& name) { return fs::path(FACTPIPE_SOURCE_DIR) / "templates" / name; }

void seed_cache(const RunConfig& config, const ChatRequest& req, const std::string& text) {
    ResponseCache(config.cache_dir).store(request_cache_key(req), request_to_json(req), text);
}

RunConfig test_config(const fs::path& cache_dir) {
    RunConfig c;
    c.cache_dir = cache_dir;
    c.retry_base_ms = 1;
    c.concurrency_limit = 4;
    return c;
}

namespace {

SpanAnnotation span_of(const std::string& response, const std::string& part, SpanLabel label) {
    const auto byte = response.find(part);
    const auto start = utf8_length(std::string_view(response).substr(0, byte));
    return {start, start + utf8_length(part), label};
}

Document make_doc(std::string id, std::string question, std::string response, std::string reference,
                  std::vector<std::pair<std::string, SpanLabel>> spans) {
    Document d;
    d.id = std::move(id);
    d.question = std::move(question);
    d.response = std::move(response);
    d.reference_response = std::move(reference);
    std::vector<SpanAnnotation> out;
    for (const auto& [part, label] : spans) {
        out.push_back(span_of(d.response, part, label));
    }
    d.span_annotations = std::move(out);
    return d;
}

} // namespace

std::vector<Document> replay_documents() {
    std::vector<Document> docs;
    docs.push_back(make_doc("q01", "Why does my ankle swell after a run?",
                            "Swelling after exercise is often caused by fluid shifting into the tissues. Ice and elevation reduce the swelling. Do you also feel pain at night?",
                            "Post-exercise swelling is usually fluid in the tissues; ice and elevation help.",
                            {{"Swelling after exercise is often caused by fluid shifting into the tissues.", SpanLabel::Cause},
                             {"Ice and elevation reduce the swelling.", SpanLabel::Suggestion}}));
    docs.push_back(make_doc("q02", "Can I take ibuprofen with lisinopril?",
                            "Regular ibuprofen can raise blood pressure. It may also reduce how well lisinopril works.",
                            "Ibuprofen taken regularly can raise blood pressure and blunt lisinopril.",
                            {{"Regular ibuprofen can raise blood pressure.", SpanLabel::Information}}));
    docs.push_back(make_doc("q03", "How much vitamin D should adults take?",
                            "Most adults need 600 to 800 IU of vitamin D per day. Sun exposure also helps the skin make vitamin D.",
                            "Adults generally need 600-800 IU daily; sunlight lets the skin produce vitamin D.",
                            {{"Most adults need 600 to 800 IU of vitamin D per day.", SpanLabel::Information}}));
    docs.push_back(make_doc("q04", "Is a fever of 39 C dangerous for a toddler?",
                            "A fever of 39 C is common with viral infections. Seek care if a rash does not fade when pressed.",
                            "Fevers around 39 C are common in viral illness; a non-blanching rash needs urgent care.",
                            {{"Seek care if a rash does not fade when pressed.", SpanLabel::Suggestion}}));
    docs.push_back(make_doc("q05", "What helps night-time heartburn?",
                            "Avoid eating within three hours of bedtime. Raising the head of the bed helps many people.",
                            "Late meals worsen reflux; raising the bed head helps.",
                            {{"Avoid eating within three hours of bedtime.", SpanLabel::Suggestion}}));
    docs.push_back(make_doc("q06", "My knee clicks on stairs. Is that bad?",
                            "I had the same thing for years. Did it start after an injury?",
                            "Painless clicking is common and usually harmless.",
                            {{"I had the same thing for years.", SpanLabel::Experience},
                             {"Did it start after an injury?", SpanLabel::Question}}));
    docs.push_back(make_doc("q07", "Can I drink alcohol on amoxicillin?",
                            "Moderate drinking does not stop amoxicillin from working. Alcohol can still slow your recovery.",
                            "Alcohol does not interact strongly with amoxicillin but may slow recovery.",
                            {{"Moderate drinking does not stop amoxicillin from working.", SpanLabel::Information}}));
    docs.push_back(make_doc("q08", "Why am I tired after covid?",
                            "Fatigue after covid is common and often improves within three months. Gradual activity helps recovery.",
                            "Post-covid fatigue is frequent and usually improves over weeks to months.",
                            {{"Fatigue after covid is common and often improves within three months.", SpanLabel::Information},
                             {"Gradual activity helps recovery.", SpanLabel::Suggestion}}));
    docs.push_back(make_doc("q09", "What does an MRI of the back involve?",
                            "The scan is painless but the machine is loud. Metal implants must be reported before the scan.",
                            "MRI is painless and noisy; metal implants have to be declared.",
                            {{"Metal implants must be reported before the scan.", SpanLabel::Suggestion}}));
    docs.push_back(make_doc("q10", "Should I worry about a small neck lump?",
                            "How long has it been there? Most small neck lumps are swollen lymph nodes from an infection.",
                            "Small neck lumps are usually reactive lymph nodes.",
                            {{"Most small neck lumps are swollen lymph nodes from an infection.", SpanLabel::Cause}}));
    return docs;
}

std::vector<Snippet> replay_corpus() {
    auto snip = [](std::string id, std::string title, std::string content) {
        Snippet s;
        s.id = std::move(id);
        s.title = std::move(title);
        s.content = std::move(content);
        return s;
    };
    return {
        snip("s01", "Exercise-associated swelling", "Swelling after exercise is caused by fluid moving into the tissues."),
        snip("s02", "Sprain care", "Ice and elevation reduce swelling after soft tissue injury."),
        snip("s03", "NSAIDs and hypertension", "Regular ibuprofen use can raise blood pressure and reduce the effect of ACE inhibitors such as lisinopril."),
        snip("s04", "Vitamin D intake", "Adults need 600 to 800 IU of vitamin D per day; the skin makes vitamin D in sunlight."),
        snip("s05", "Fever in children", "A fever of 39 C is common with viral infections in toddlers."),
        snip("s06", "Non-blanching rash", "A rash that does not fade when pressed needs urgent medical care."),
        snip("s07", "Reflux", "Eating within three hours of bedtime worsens reflux; raising the head of the bed helps."),
        snip("s08", "Amoxicillin", "Moderate alcohol intake does not reduce the effectiveness of amoxicillin."),
        snip("s09", "Post-viral fatigue", "Fatigue after covid often improves within three months with gradual activity."),
        snip("s10", "MRI safety", "MRI scans are painless but loud, and metal implants must be reported beforehand."),
        snip("s11", "Lymph nodes", "Most small neck lumps are swollen lymph nodes reacting to an infection."),
    };
}

std::string scripted_answer(const std::string& user, const std::string& system) {
    if (system.rfind("You are an entailment model", 0) == 0) {
        const auto h = sha256_hex(user);
        const char c = h[0];
        if (c < '8') {
            return "Label: True\nScore: 0.9";
        }
        if (c < 'c') {
            return "Label: False\nScore: 0.3";
        }
        return "Label: True\nScore: 0.8";
    }
    const auto sentence_at = user.rfind("Sentence: ");
    if (sentence_at != std::string::npos) {
        auto sentence = user.substr(sentence_at + 10);
        if (auto nl = sentence.find('\n'); nl != std::string::npos) {
            sentence.resize(nl);
        }
        if (!sentence.empty() && sentence.back() == '?') {
            return "No verifiable claim";
        }
        std::string out = "- " + sentence;
        if (sentence.size() > 50) {
            out += "\n- " + sentence.substr(0, 40) + ".";
        }
        return out;
    }
    const auto h = sha256_hex(system + "\n" + user);
    if (h[0] < '9') {
        return "True. The statement is consistent with the context.";
    }
    if (h[0] < 'e') {
        return "False";
    }
    return "I cannot say.";
}

std::string documents_jsonl(const std::vector<Document>& docs) { return to_jsonl(docs); }

std::string corpus_jsonl(const std::vector<Snippet>& snippets) {
    std::string out;
    for (const auto& s : snippets) {
        json j{{"id", s.id}, {"title", s.title ? json(*s.title) : json(nullptr)}, {"content", s.content}};
        out += dump_line(j) + "\n";
    }
    return out;
}

std::string random_word(std::mt19937_64& rng, std::size_t vocabulary) {
    std::uniform_int_distribution<std::size_t> pick(0, vocabulary - 1);
    return "w" + std::to_string(pick(rng));
}

std::vector<Snippet> random_corpus(std::mt19937_64& rng, std::size_t n, std::size_t dim, std::size_t vocabulary) {
    std::uniform_int_distribution<int> len(1, 30);
    std::uniform_int_distribution<int> coin(0, 3);
    std::uniform_int_distribution<int> component(-4, 4);
    std::vector<Snippet> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Snippet s;
        // Random prefix: id order is unrelated to insertion order.
        s.id = "doc-" + std::to_string(rng() % 1000000) + "-" + std::to_string(i);
        if (coin(rng) == 0) {
            s.title = random_word(rng, vocabulary) + " " + random_word(rng, vocabulary);
        }
        const int words = len(rng);
        for (int w = 0; w < words; ++w) {
            if (w > 0) {
                s.content += coin(rng) == 0 ? ", " : " ";
            }
            auto word = random_word(rng, vocabulary);
            if (coin(rng) == 0) {
                word[0] = 'W';
            }
            s.content += word;
        }
        if (dim > 0) {
            std::vector<double> v(dim);
            bool nonzero = false;
            while (!nonzero) {
                for (auto& x : v) {
                    // Small integer grid: many exact score ties.
                    x = static_cast<double>(component(rng));
                    nonzero = nonzero || x != 0.0;
                }
            }
            s.embedding = std::move(v);
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace fptest
