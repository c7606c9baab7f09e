// HTTP side of the gateway: the real wire transport (cpp-httplib, TLS via
// OpenSSL), the mock-serve endpoint, and the endpoint-URL -> transport
// factory. Split from gateway.hpp so logic-only consumers skip the httplib
// include.

#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "typobench/detail/base64.hpp"
#include "typobench/gateway.hpp"

#include <cstdlib>
#include <map>
#include <memory>
#include <string>

namespace typobench::gateway {

inline constexpr const char* kSidecarHeader = "X-Typobench-Sidecar";

struct ParsedUrl {
    std::string scheme;
    std::string host_port;                   // scheme://authority for httplib
    std::string base_path;                   // path prefix, no trailing slash
    std::map<std::string, std::string> params;
};

inline ParsedUrl parse_url(const std::string& url) {
    ParsedUrl out;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint_url missing scheme: " + url);
    out.scheme = url.substr(0, scheme_end);
    std::string rest = url.substr(scheme_end + 3);
    std::string query;
    if (auto q = rest.find('?'); q != std::string::npos) {
        query = rest.substr(q + 1);
        rest = rest.substr(0, q);
    }
    auto slash = rest.find('/');
    std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
    out.base_path = slash == std::string::npos ? "" : rest.substr(slash);
    while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
    out.host_port = out.scheme + "://" + authority;
    std::size_t pos = 0;
    while (pos < query.size()) {
        auto amp = query.find('&', pos);
        std::string kv = query.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
        if (auto eq = kv.find('='); eq != std::string::npos)
            out.params[kv.substr(0, eq)] = kv.substr(eq + 1);
        else if (!kv.empty())
            out.params[kv] = "";
        pos = amp == std::string::npos ? query.size() : amp + 1;
    }
    return out;
}

/// Real wire transport. A fresh connection per request keeps it trivially
/// thread-safe; handshake cost is noise next to model latency.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(ModelClientConfig config) : config_(std::move(config)) {
        auto parsed = parse_url(config_.endpoint_url);
        host_port_ = parsed.host_port;
        base_path_ = parsed.base_path;
        if (!config_.api_key_ref.empty()) {
            const char* v = std::getenv(config_.api_key_ref.c_str());
            if (v == nullptr || *v == '\0')
                throw TransportError("credential environment variable '" + config_.api_key_ref +
                                     "' is not set");
            api_key_ = v;
        }
    }

private:
    TransportResult do_post(const std::string& api_path, const std::string& body,
                            const std::optional<Sidecar>& sidecar) override {
        httplib::Client cli(host_port_);
        cli.set_connection_timeout(static_cast<int>(config_.timeout_s), 0);
        cli.set_read_timeout(static_cast<int>(config_.timeout_s), 0);
        cli.set_write_timeout(static_cast<int>(config_.timeout_s), 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        if (sidecar && config_.send_test_sidecar)
            headers.emplace(kSidecarHeader, detail::base64_encode(sidecar->to_json().dump()));

        // base paths that already name the route are used as-is
        std::string path = base_path_;
        if (path.find("/chat/completions") == std::string::npos &&
            path.find("/embeddings") == std::string::npos)
            path += api_path;

        auto res = cli.Post(path, headers, body, "application/json");
        if (!res) return {false, 0, "", httplib::to_string(res.error())};
        return {true, res->status, res->body, ""};
    }

    ModelClientConfig config_;
    std::string host_port_;
    std::string base_path_;
    std::string api_key_;
};

/// endpoint_url dispatch:
///   mock://<policy>[?seed=N&dim=D]  in-process mock model
///   fixture://<path>                embeddings from a fixture file
///   http(s)://...                   real endpoint
inline std::shared_ptr<Transport> make_transport(const ModelClientConfig& config) {
    auto parsed = parse_url(config.endpoint_url);
    if (parsed.scheme == "mock") {
        std::string kind = parsed.host_port.substr(parsed.scheme.size() + 3);
        MockPolicy policy;
        policy.kind = MockPolicy::kind_from_string(kind);
        if (auto it = parsed.params.find("seed"); it != parsed.params.end())
            policy.seed = std::stoull(it->second);
        std::size_t dim = 16;
        if (auto it = parsed.params.find("dim"); it != parsed.params.end())
            dim = std::stoul(it->second);
        return std::make_shared<MockTransport>(policy, dim);
    }
    if (parsed.scheme == "fixture") {
        std::string path = config.endpoint_url.substr(std::string("fixture://").size());
        return std::make_shared<FixtureEmbedTransport>(path);
    }
    if (parsed.scheme == "http" || parsed.scheme == "https")
        return std::make_shared<HttpTransport>(config);
    throw ConfigError("unsupported endpoint scheme in '" + config.endpoint_url + "'");
}

inline ModelClient make_client(const ModelClientConfig& config,
                               std::shared_ptr<CacheStore> cache,
                               Sleeper sleeper = default_sleeper) {
    return ModelClient(config, std::move(cache), make_transport(config), std::move(sleeper));
}

// ---------------------------------------------------------------------------
// mock-serve: a wire-compatible local endpoint for integration tests

class MockServer {
public:
    MockServer(MockPolicy policy, std::size_t embed_dim = 16)
        : policy_(policy), embed_dim_(embed_dim) {
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         handle(req, res, "/v1/chat/completions");
                     });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            handle(req, res, "/v1/embeddings");
        });
        server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"status\":\"ok\"}", "application/json");
        });
    }

    /// Bind to an OS-assigned port; returns it. Serve on a caller thread.
    int bind_any(const std::string& host = "127.0.0.1") {
        int port = server_.bind_to_any_port(host);
        if (port <= 0) throw TransportError("mock server failed to bind");
        return port;
    }

    bool listen_after_bind() { return server_.listen_after_bind(); }
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    void stop() { server_.stop(); }
    bool is_running() const { return server_.is_running(); }

private:
    void handle(const httplib::Request& req, httplib::Response& res, const std::string& path) {
        std::optional<Sidecar> sidecar;
        if (req.has_header(kSidecarHeader)) {
            auto decoded = detail::base64_decode(req.get_header_value(kSidecarHeader));
            sidecar = Sidecar::from_json(
                json::parse(std::string(decoded.begin(), decoded.end())));
        }
        try {
            res.set_content(mockdetail::serve_mock_request(policy_, embed_dim_, path, req.body, sidecar),
                            "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
    }

    MockPolicy policy_;
    std::size_t embed_dim_;
    httplib::Server server_;
};

} // namespace typobench::gateway
