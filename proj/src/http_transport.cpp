#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "simeval/backends.hpp"
#include "simeval/error.hpp"

namespace simeval {

namespace {

class HttplibTransport : public HttpTransport {
public:
    HttplibTransport(const std::string& base_url, std::chrono::seconds timeout) {
        auto scheme_end = base_url.find("://");
        if (scheme_end == std::string::npos) throw ParseError("base_url needs a scheme: " + base_url);
        auto path_start = base_url.find('/', scheme_end + 3);
        origin_ = base_url.substr(0, path_start);
        if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        timeout_ = timeout;
    }

    HttpResult post_json(const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& headers) override {
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        // httplib::Client is not safe for concurrent requests; one client per call.
        httplib::Client client(origin_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        auto res = client.Post(prefix_ + path, h, body, "application/json");
        if (!res) return {0, {}, httplib::to_string(res.error())};
        return {res->status, res->body, {}};
    }

private:
    std::string origin_;
    std::string prefix_;
    std::chrono::seconds timeout_{120};
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout) {
    return std::make_unique<HttplibTransport>(base_url, timeout);
}

}  // namespace simeval
