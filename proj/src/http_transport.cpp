#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "factpipe/llm_client.hpp"

namespace factpipe {

namespace {

std::atomic<std::uint64_t> g_requests{0};

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = url.find('/', host_start);
    if (slash == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, slash), url.substr(slash)};
}

TransportFailure classify(httplib::Error err) {
    switch (err) {
    case httplib::Error::Connection:
    case httplib::Error::BindIPAddress:
    case httplib::Error::SSLConnection:
    case httplib::Error::ProxyConnection:
        return TransportFailure::ConnectFailed;
    case httplib::Error::ConnectionTimeout:
        return TransportFailure::Timeout;
    case httplib::Error::Read:
    case httplib::Error::Write:
        return TransportFailure::ConnectionReset;
    default:
        return TransportFailure::Other;
    }
}

} // namespace

HttpTransport::HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

std::uint64_t HttpTransport::total_requests() noexcept { return g_requests.load(); }

HttpReply HttpTransport::post_json(const std::string& url, const std::string& body,
                                   const HttpHeaders& headers) {
    g_requests.fetch_add(1);
    const auto parts = split_url(url);
    HttpReply reply;
    try {
        httplib::Client client(parts.origin);
        client.set_connection_timeout(std::chrono::seconds(10));
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        httplib::Headers h;
        for (const auto& [k, v] : headers) {
            h.emplace(k, v);
        }
        auto res = client.Post(parts.path, h, body, "application/json");
        if (!res) {
            reply.failure = classify(res.error());
            reply.error = httplib::to_string(res.error());
            return reply;
        }
        reply.status = res->status;
        reply.body = std::move(res->body);
    } catch (const std::exception& e) {
        reply.failure = TransportFailure::Other;
        reply.error = e.what();
    }
    return reply;
}

} // namespace factpipe
