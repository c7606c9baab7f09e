// Wire-level integration: a mock-serve endpoint on a real socket, driven
// through the real HTTP transport. This pins the external interface the
// pipeline exposes: chat-completions JSON with base64 image data URLs, the
// embeddings route, and header handling.

#include "typobench/gateway_http.hpp"

#include "support/fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <thread>

using namespace typobench;
using gateway::MockPolicy;
using gateway::MockServer;

namespace {

struct RunningServer {
    MockServer server;
    int port = 0;
    std::thread thread;

    explicit RunningServer(MockPolicy policy, std::size_t dim = 8) : server(policy, dim) {
        port = server.bind_any();
        thread = std::thread([this] { server.listen_after_bind(); });
        for (int i = 0; i < 100 && !server.is_running(); ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ~RunningServer() {
        server.stop();
        thread.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

} // namespace

TEST_CASE("url parsing") {
    auto u = gateway::parse_url("https://api.example.com/v1?x=1&flag");
    CHECK(u.scheme == "https");
    CHECK(u.host_port == "https://api.example.com");
    CHECK(u.base_path == "/v1");
    CHECK(u.params.at("x") == "1");
    CHECK(u.params.count("flag") == 1);
    CHECK_THROWS_AS(gateway::parse_url("no-scheme"), ConfigError);

    auto m = gateway::parse_url("mock://uniform_random?seed=4&dim=32");
    CHECK(m.scheme == "mock");
    CHECK(m.params.at("seed") == "4");
}

TEST_CASE("chat round-trips over the real wire with sidecar and image") {
    RunningServer srv(MockPolicy{MockPolicy::Kind::truthful, 0});

    gateway::ModelClientConfig config;
    config.endpoint_url = srv.url();
    config.model_name = "wire-model";
    config.send_test_sidecar = true;
    auto cache = std::make_shared<gateway::CacheStore>();
    auto client = gateway::make_client(config, cache);

    gateway::Sidecar sidecar;
    sidecar.kind = "mcq";
    sidecar.ground_truth = "Jeep";
    sidecar.option_list = {"Audi", "Jeep"};

    auto png = img::encode_png(tfx::synth_image(80, 80, 1));
    gateway::CallMeta meta;
    auto answer = client.chat({{"user", "Select the correct car...", png}}, sidecar, &meta);
    CHECK(answer == "(2)");
    CHECK_FALSE(meta.from_cache);
    CHECK(meta.latency_ms >= 0);

    // cached on the second call: no new wire activity
    auto calls_before = client.transport()->calls();
    auto again = client.chat({{"user", "Select the correct car...", png}}, sidecar, &meta);
    CHECK(again == "(2)");
    CHECK(client.transport()->calls() == calls_before);
}

TEST_CASE("embeddings route works over the wire") {
    RunningServer srv(MockPolicy{MockPolicy::Kind::truthful, 0}, 8);
    gateway::ModelClientConfig config;
    config.endpoint_url = srv.url();
    config.model_name = "wire-embed";
    auto client = gateway::make_client(config, std::make_shared<gateway::CacheStore>());
    auto rows = client.embed({"a photo of a Jeep"});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].size() == 8);
}

TEST_CASE("wire payload shape matches the chat-completions contract") {
    // independent of the client: capture exactly what lands on the socket
    httplib::Server capture;
    std::string seen_body;
    httplib::Headers seen_headers;
    capture.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        seen_headers = req.headers;
        res.set_content(
            gateway::mockdetail::wrap_chat_response("m", "(1)").dump(),
            "application/json");
    });
    int port = capture.bind_to_any_port("127.0.0.1");
    std::thread t([&] { capture.listen_after_bind(); });
    for (int i = 0; i < 100 && !capture.is_running(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));

    setenv("TYPOBENCH_TEST_KEY", "sk-wire-test", 1);
    gateway::ModelClientConfig config;
    config.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
    config.model_name = "shape-model";
    config.api_key_ref = "TYPOBENCH_TEST_KEY";
    // send_test_sidecar stays false: sidecar must never reach the wire
    auto client = gateway::make_client(config, std::make_shared<gateway::CacheStore>());

    gateway::Sidecar sidecar;
    sidecar.kind = "mcq";
    sidecar.ground_truth = "secret";
    std::vector<std::uint8_t> png{0x89, 0x50, 0x4e, 0x47};
    client.chat({{"user", "hello", png}}, sidecar);

    capture.stop();
    t.join();

    auto body = tfx::json::parse(seen_body);
    CHECK(body.at("model") == "shape-model");
    CHECK(body.at("temperature") == 0.0);
    REQUIRE(body.at("messages").size() == 1);
    const auto& msg = body.at("messages").at(0);
    CHECK(msg.at("role") == "user");
    REQUIRE(msg.at("content").size() == 2);
    CHECK(msg.at("content").at(0).at("type") == "text");
    CHECK(msg.at("content").at(0).at("text") == "hello");
    CHECK(msg.at("content").at(1).at("type") == "image_url");
    auto url = msg.at("content").at(1).at("image_url").at("url").get<std::string>();
    CHECK(url.rfind("data:image/png;base64,", 0) == 0);
    CHECK(url.substr(std::string("data:image/png;base64,").size()) == "iVBORw==");
    // sidecar never serializes into real payloads or headers
    CHECK(seen_body.find("secret") == std::string::npos);
    CHECK(seen_headers.find(gateway::kSidecarHeader) == seen_headers.end());
    // credential resolved from the environment
    auto auth = seen_headers.find("Authorization");
    REQUIRE(auth != seen_headers.end());
    CHECK(auth->second == "Bearer sk-wire-test");
}

TEST_CASE("missing credential environment variable is a transport error") {
    unsetenv("TYPOBENCH_MISSING_KEY");
    gateway::ModelClientConfig config;
    config.endpoint_url = "http://127.0.0.1:1";
    config.model_name = "m";
    config.api_key_ref = "TYPOBENCH_MISSING_KEY";
    CHECK_THROWS_AS(gateway::HttpTransport(config), TransportError);
}

TEST_CASE("unreachable endpoint exhausts retries and reports transport failure") {
    gateway::ModelClientConfig config;
    config.endpoint_url = "http://127.0.0.1:9"; // discard port, nothing listens
    config.model_name = "m";
    config.max_retries = 1;
    config.timeout_s = 1;
    tfx::FakeSleeper sleeper;
    auto client = gateway::make_client(config, std::make_shared<gateway::CacheStore>(), sleeper);
    CHECK_THROWS_AS(client.chat({{"user", "q", std::nullopt}}), TransportError);
}

TEST_CASE("healthz answers on the mock server") {
    RunningServer srv(MockPolicy{MockPolicy::Kind::fixed_choice, 0});
    httplib::Client cli("127.0.0.1", srv.port);
    auto res = cli.Get("/healthz");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body.find("ok") != std::string::npos);
}
