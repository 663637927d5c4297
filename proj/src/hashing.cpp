#include "factpipe/hashing.hpp"

#include "factpipe/error.hpp"
#include "factpipe/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>

namespace factpipe {

struct Sha256::Impl {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    ~Impl() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
    if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest initialisation failed");
    }
}

Sha256::~Sha256() = default;

void Sha256::update(std::string_view data) {
    if (EVP_DigestUpdate(impl_->ctx, data.data(), data.size()) != 1) {
        throw Error("sha256: update failed");
    }
}

void Sha256::update_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) {
            update({buf.data(), static_cast<std::size_t>(got)});
        }
    }
}

std::string Sha256::hex_digest() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(impl_->ctx, md.data(), &len) != 1) {
        throw Error("sha256: finalisation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0x0F]);
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data);
    return h.hex_digest();
}

std::string file_sha256(const std::filesystem::path& path) {
    Sha256 h;
    h.update_file(path);
    return h.hex_digest();
}

std::string cache_key_material(std::string_view model_name, std::string_view prompt_text,
                               double temperature, double top_p, int max_tokens) {
    std::string s;
    s.reserve(prompt_text.size() + model_name.size() + 64);
    s += "model\n";
    s += model_name;
    s += "\ntemp\n";
    s += format_real(temperature);
    s += "\ntop_p\n";
    s += format_real(top_p);
    s += "\nmax_tokens\n";
    s += std::to_string(max_tokens);
    s += "\nprompt\n";
    s += prompt_text;
    return s;
}

std::string cache_key(std::string_view model_name, std::string_view prompt_text, double temperature,
                      double top_p, int max_tokens) {
    return sha256_hex(cache_key_material(model_name, prompt_text, temperature, top_p, max_tokens));
}

} // namespace factpipe
