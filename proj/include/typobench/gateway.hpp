// Uniform client layer over chat-vision and embedding endpoints:
// content-addressed response caching, bounded retry with exponential
// backoff, an instrumented transport counter, and deterministic mock
// models for offline runs and tests.
//
// Wire format is chat-completions-style JSON with images as base64 data
// URLs. Payloads are canonicalized (sorted keys, shortest-round-trip float
// formatting) because cache keys hash the payload bytes.

#pragma once

#include "typobench/detail/base64.hpp"
#include "typobench/detail/jsonl.hpp"
#include "typobench/detail/rng.hpp"
#include "typobench/detail/sha256.hpp"
#include "typobench/detail/strings.hpp"
#include "typobench/errors.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace typobench::gateway {

using detail::json;

// ---------------------------------------------------------------------------
// configuration

struct ModelClientConfig {
    std::string endpoint_url; // http(s)://..., mock://<kind>[?k=v], fixture://<path>
    std::string model_name;
    std::string api_key_ref;  // environment variable holding the credential
    double timeout_s = 120.0;
    int max_retries = 3;
    double temperature = 0.0;
    double retry_ceiling_s = 30.0; // total backoff sleep budget
    double max_payload_mb = 64.0;  // reject before the wire; endpoints cap request size
    bool send_test_sidecar = false; // attach sidecar header (mock servers only)

    json to_json() const {
        return {{"endpoint_url", endpoint_url}, {"model_name", model_name},
                {"api_key_ref", api_key_ref},   {"timeout_s", timeout_s},
                {"max_retries", max_retries},   {"temperature", temperature},
                {"retry_ceiling_s", retry_ceiling_s}, {"max_payload_mb", max_payload_mb},
                {"send_test_sidecar", send_test_sidecar}};
    }

    static ModelClientConfig from_json(const json& j) {
        ModelClientConfig c;
        c.endpoint_url = j.at("endpoint_url").get<std::string>();
        c.model_name = j.at("model_name").get<std::string>();
        c.api_key_ref = j.value("api_key_ref", std::string{});
        c.timeout_s = j.value("timeout_s", 120.0);
        c.max_retries = j.value("max_retries", 3);
        c.temperature = j.value("temperature", 0.0);
        c.retry_ceiling_s = j.value("retry_ceiling_s", 30.0);
        c.max_payload_mb = j.value("max_payload_mb", 64.0);
        c.send_test_sidecar = j.value("send_test_sidecar", false);
        return c;
    }
};

/// Test-only metadata travelling beside a request so mock policies can act
/// as oracles. Never part of the canonical payload or the cache key; the
/// HTTP transport forwards it (as a header) only when send_test_sidecar is
/// set for a mock server.
struct Sidecar {
    std::string kind; // "mcq" | "class_query" | "desc_query"
    std::string ground_truth;
    std::vector<std::string> rendered_texts;
    std::vector<std::string> option_list;

    json to_json() const {
        return {{"kind", kind},
                {"ground_truth", ground_truth},
                {"rendered_texts", rendered_texts},
                {"option_list", option_list}};
    }

    static Sidecar from_json(const json& j) {
        Sidecar s;
        s.kind = j.value("kind", std::string{});
        s.ground_truth = j.value("ground_truth", std::string{});
        if (j.contains("rendered_texts"))
            s.rendered_texts = j.at("rendered_texts").get<std::vector<std::string>>();
        if (j.contains("option_list"))
            s.option_list = j.at("option_list").get<std::vector<std::string>>();
        return s;
    }
};

// ---------------------------------------------------------------------------
// canonical payloads

struct ChatMessage {
    std::string role = "user";
    std::string text;
    std::optional<std::vector<std::uint8_t>> image_png;
};

inline json chat_payload(const std::string& model, const std::vector<ChatMessage>& messages,
                         double temperature) {
    json msgs = json::array();
    for (const auto& m : messages) {
        json content = json::array();
        content.push_back({{"type", "text"}, {"text", m.text}});
        if (m.image_png) {
            content.push_back(
                {{"type", "image_url"},
                 {"image_url",
                  {{"url", "data:image/png;base64," + detail::base64_encode(*m.image_png)}}}});
        }
        msgs.push_back({{"role", m.role}, {"content", std::move(content)}});
    }
    return {{"model", model}, {"messages", std::move(msgs)}, {"temperature", temperature}};
}

inline json embed_payload(const std::string& model, const std::vector<std::string>& texts) {
    return {{"model", model}, {"input", texts}};
}

inline std::string cache_key(const std::string& model, const std::string& canonical_body) {
    return detail::sha256_hex(model + "\n" + canonical_body);
}

// ---------------------------------------------------------------------------
// response cache: append-only JSONL, key -> raw response body

class CacheStore {
public:
    /// In-memory only (tests).
    CacheStore() = default;

    explicit CacheStore(std::filesystem::path file) : file_(std::move(file)) {
        namespace fs = std::filesystem;
        if (!file_.parent_path().empty()) fs::create_directories(file_.parent_path());
        if (fs::exists(file_)) {
            for (const auto& line : detail::read_jsonl(file_))
                entries_[line.at("key").get<std::string>()] =
                    line.at("response").get<std::string>();
        }
        for (const auto& [key, value] : entries_) snapshot_.insert(key);
        out_.open(file_, std::ios::app);
        if (!out_) throw ConfigError("cannot open cache file " + file_.string());
    }

    std::optional<std::string> lookup(const std::string& key) const {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    /// Whether the entry predates this process. Records report this rather
    /// than live-cache hits: two concurrent items with identical payloads
    /// would otherwise race on who populates the entry, making from_cache
    /// bits scheduling-dependent.
    bool in_snapshot(const std::string& key) const {
        std::lock_guard lock(mutex_);
        return snapshot_.count(key) > 0;
    }

    void store(const std::string& key, const std::string& model, const std::string& response) {
        std::lock_guard lock(mutex_);
        if (!entries_.emplace(key, response).second) return; // identical by construction
        if (out_.is_open()) {
            json line{{"key", key},
                      {"model", model},
                      {"created_at", static_cast<std::int64_t>(std::time(nullptr))},
                      {"response", response}};
            out_ << line.dump() << "\n";
            out_.flush();
        }
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

private:
    std::filesystem::path file_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> entries_;
    std::set<std::string> snapshot_; // keys present when the store opened
    std::ofstream out_;
};

// ---------------------------------------------------------------------------
// transports

struct TransportResult {
    bool ok = false;
    int status = 0;
    std::string body;
    std::string error;

    bool retryable() const {
        return !ok || status == 408 || status == 429 || (status >= 500 && status < 600);
    }
    bool success() const { return ok && status >= 200 && status < 300; }
};

class Transport {
public:
    virtual ~Transport() = default;

    TransportResult post_json(const std::string& api_path, const std::string& body,
                              const std::optional<Sidecar>& sidecar) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return do_post(api_path, body, sidecar);
    }

    /// Wire calls performed (cache hits never reach the transport).
    std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }

    /// True when responses take no measurable wall time (in-process mocks);
    /// the evaluator records latency 0 for these so seeded runs stay
    /// byte-identical.
    virtual bool deterministic_timing() const { return false; }

private:
    virtual TransportResult do_post(const std::string& api_path, const std::string& body,
                                    const std::optional<Sidecar>& sidecar) = 0;

    std::atomic<std::uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// deterministic mock models

struct MockPolicy {
    enum class Kind { truthful, text_follower, fixed_choice, uniform_random };
    Kind kind = Kind::truthful;
    std::uint64_t seed = 0;

    static Kind kind_from_string(const std::string& s) {
        if (s == "truthful") return Kind::truthful;
        if (s == "text_follower") return Kind::text_follower;
        if (s == "fixed_choice") return Kind::fixed_choice;
        if (s == "uniform_random") return Kind::uniform_random;
        throw ConfigError("unknown mock policy '" + s + "'");
    }
};

namespace mockdetail {

/// First vocabulary entry that differs from the label (case-folded).
inline std::string pick_non_label(const std::vector<std::string>& options,
                                  const std::string& label) {
    auto label_key = detail::class_key(label);
    for (const auto& o : options)
        if (detail::class_key(o) != label_key) return o;
    return options.empty() ? std::string{"unknown"} : options.front();
}

inline std::string mcq_answer(const MockPolicy& policy, const Sidecar& sidecar,
                              const std::string& body) {
    const auto& options = sidecar.option_list;
    auto pick = [&](std::size_t idx1) { return "(" + std::to_string(idx1) + ")"; };
    if (options.empty()) return pick(1);
    switch (policy.kind) {
        case MockPolicy::Kind::truthful: {
            auto key = detail::class_key(sidecar.ground_truth);
            for (std::size_t i = 0; i < options.size(); ++i)
                if (detail::class_key(options[i]) == key) return pick(i + 1);
            return pick(1);
        }
        case MockPolicy::Kind::text_follower: {
            for (std::size_t i = 0; i < options.size(); ++i) {
                auto key = detail::class_key(options[i]);
                for (const auto& t : sidecar.rendered_texts)
                    if (detail::class_key(t) == key) return pick(i + 1);
            }
            return pick(1);
        }
        case MockPolicy::Kind::fixed_choice:
            return pick(1);
        case MockPolicy::Kind::uniform_random: {
            auto rng = detail::keyed_rng(policy.seed, "mock_mcq", detail::sha256_hex(body));
            return pick(rng.bounded(options.size()) + 1);
        }
    }
    return pick(1);
}

inline std::string chat_content(const MockPolicy& policy, const std::optional<Sidecar>& sidecar,
                                const std::string& body) {
    if (!sidecar) return "(1)";
    if (sidecar->kind == "class_query") {
        if (policy.kind == MockPolicy::Kind::uniform_random && sidecar->option_list.size() > 1) {
            auto rng = detail::keyed_rng(policy.seed, "mock_class", detail::sha256_hex(body));
            auto label_key = detail::class_key(sidecar->ground_truth);
            std::vector<std::string> eligible;
            for (const auto& o : sidecar->option_list)
                if (detail::class_key(o) != label_key) eligible.push_back(o);
            if (!eligible.empty()) return eligible[rng.bounded(eligible.size())];
        }
        return pick_non_label(sidecar->option_list, sidecar->ground_truth);
    }
    if (sidecar->kind == "desc_query") {
        std::string cls = pick_non_label(sidecar->option_list, sidecar->ground_truth);
        json reply{{"deceiving_class", cls},
                   {"description",
                    "A rare " + cls + " variant that is regularly mistaken for a " +
                        sidecar->ground_truth + "."}};
        return reply.dump();
    }
    return mcq_answer(policy, *sidecar, body);
}

inline std::vector<double> hash_embedding(const std::string& text, std::size_t dim) {
    detail::SplitMix64 rng(detail::sha256_prefix64("embed\x1f" + text));
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (auto& x : v) {
        x = rng.unit_real() * 2.0 - 1.0;
        norm2 += x * x;
    }
    if (norm2 == 0.0) {
        v[0] = 1.0;
        norm2 = 1.0;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

inline json wrap_chat_response(const std::string& model, const std::string& content) {
    return {{"id", "mock-" + detail::sha256_hex(content).substr(0, 12)},
            {"object", "chat.completion"},
            {"model", model},
            {"choices",
             json::array({{{"index", 0},
                           {"message", {{"role", "assistant"}, {"content", content}}},
                           {"finish_reason", "stop"}}})},
            {"usage", {{"prompt_tokens", 0}, {"completion_tokens", 0}, {"total_tokens", 0}}}};
}

inline json wrap_embed_response(const std::string& model,
                                const std::vector<std::vector<double>>& vectors) {
    json data = json::array();
    for (std::size_t i = 0; i < vectors.size(); ++i)
        data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", vectors[i]}});
    return {{"object", "list"}, {"data", std::move(data)}, {"model", model}};
}

/// Shared by the in-process transport and the mock-serve HTTP server.
inline std::string serve_mock_request(const MockPolicy& policy, std::size_t embed_dim,
                                      const std::string& api_path, const std::string& body,
                                      const std::optional<Sidecar>& sidecar) {
    json req = json::parse(body);
    std::string model = req.value("model", "mock");
    if (api_path.find("embedding") != std::string::npos) {
        std::vector<std::vector<double>> vectors;
        for (const auto& t : req.at("input")) vectors.push_back(hash_embedding(t.get<std::string>(), embed_dim));
        return wrap_embed_response(model, vectors).dump();
    }
    return wrap_chat_response(model, chat_content(policy, sidecar, body)).dump();
}

} // namespace mockdetail

/// In-process mock endpoint.
class MockTransport : public Transport {
public:
    explicit MockTransport(MockPolicy policy, std::size_t embed_dim = 16)
        : policy_(policy), embed_dim_(embed_dim) {}

    bool deterministic_timing() const override { return true; }

private:
    TransportResult do_post(const std::string& api_path, const std::string& body,
                            const std::optional<Sidecar>& sidecar) override {
        try {
            return {true, 200, mockdetail::serve_mock_request(policy_, embed_dim_, api_path, body, sidecar), ""};
        } catch (const std::exception& e) {
            return {true, 400, "", e.what()};
        }
    }

    MockPolicy policy_;
    std::size_t embed_dim_;
};

/// Embeddings served from a fixture file:
/// {"provider_id": str, "dim": int, "entries": {text: [floats]}}
class FixtureEmbedTransport : public Transport {
public:
    explicit FixtureEmbedTransport(const std::filesystem::path& path) {
        json doc = detail::read_json_file(path);
        dim_ = doc.at("dim").get<std::size_t>();
        for (const auto& [text, vec] : doc.at("entries").items())
            entries_[text] = vec.get<std::vector<double>>();
    }

    bool deterministic_timing() const override { return true; }

private:
    TransportResult do_post(const std::string& api_path, const std::string& body,
                            const std::optional<Sidecar>&) override {
        if (api_path.find("embedding") == std::string::npos)
            return {true, 400, "", "fixture transport serves embeddings only"};
        json req = json::parse(body);
        std::vector<std::vector<double>> vectors;
        for (const auto& t : req.at("input")) {
            auto it = entries_.find(t.get<std::string>());
            if (it == entries_.end())
                return {true, 404, "", "no fixture embedding for '" + t.get<std::string>() + "'"};
            vectors.push_back(it->second);
        }
        return {true, 200,
                mockdetail::wrap_embed_response(req.value("model", "fixture"), vectors).dump(),
                ""};
    }

    std::map<std::string, std::vector<double>> entries_;
    std::size_t dim_ = 0;
};

/// Always fails (error-path tests).
class FailingTransport : public Transport {
public:
    explicit FailingTransport(int status = 500) : status_(status) {}
    bool deterministic_timing() const override { return true; }

private:
    TransportResult do_post(const std::string&, const std::string&,
                            const std::optional<Sidecar>&) override {
        return {true, status_, "", "injected failure"};
    }
    int status_;
};

// ---------------------------------------------------------------------------
// clients

struct CallMeta {
    bool from_cache = false;
    int latency_ms = 0;
    int attempts = 0;
};

using Sleeper = std::function<void(int /*ms*/)>;

inline void default_sleeper(int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }

namespace clientdetail {

inline std::string extract_chat_content(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw TransportError("chat response is not JSON");
    try {
        const json& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        if (content.is_array()) { // some providers return content parts
            std::string text;
            for (const auto& part : content)
                if (part.value("type", "") == "text") text += part.value("text", "");
            return text;
        }
    } catch (const json::exception&) {
    }
    throw TransportError("chat response missing choices[0].message.content");
}

inline std::vector<std::vector<double>> extract_embeddings(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw TransportError("embedding response is not JSON");
    try {
        std::vector<std::vector<double>> out;
        for (const auto& row : j.at("data")) out.push_back(row.at("embedding").get<std::vector<double>>());
        return out;
    } catch (const json::exception&) {
        throw TransportError("embedding response missing data[].embedding");
    }
}

} // namespace clientdetail

/// Chat + embedding access with content-addressed caching and bounded
/// exponential backoff. Thread-safe; share one instance across workers.
class ModelClient {
public:
    ModelClient(ModelClientConfig config, std::shared_ptr<CacheStore> cache,
                std::shared_ptr<Transport> transport, Sleeper sleeper = default_sleeper)
        : config_(std::move(config)), cache_(std::move(cache)), transport_(std::move(transport)),
          sleeper_(std::move(sleeper)) {}

    const ModelClientConfig& config() const { return config_; }
    const std::shared_ptr<Transport>& transport() const { return transport_; }

    /// Returns assistant text. Throws TransportError after retries exhaust.
    std::string chat(const std::vector<ChatMessage>& messages,
                     const std::optional<Sidecar>& sidecar = std::nullopt,
                     CallMeta* meta = nullptr) {
        std::string body = chat_payload(config_.model_name, messages, config_.temperature).dump();
        std::string raw = post_cached("/v1/chat/completions", body, sidecar, meta);
        return clientdetail::extract_chat_content(raw);
    }

    /// One unit-normalized embedding per input text, cached per text.
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                           CallMeta* meta = nullptr) {
        if (texts.empty()) throw ValidationError("embed: empty input");
        std::vector<std::vector<double>> out;
        std::size_t dim = 0;
        for (const auto& text : texts) {
            std::string body = embed_payload(config_.model_name, {text}).dump();
            CallMeta one;
            std::string raw = post_cached("/v1/embeddings", body, std::nullopt, &one);
            if (meta) {
                meta->from_cache = meta->from_cache || one.from_cache;
                meta->latency_ms += one.latency_ms;
                meta->attempts += one.attempts;
            }
            auto rows = clientdetail::extract_embeddings(raw);
            if (rows.size() != 1) throw TransportError("embedding response row count mismatch");
            auto& v = rows[0];
            double norm2 = 0.0;
            for (double x : v) norm2 += x * x;
            if (norm2 <= 0.0) throw TransportError("embedding with zero norm");
            if (dim == 0) dim = v.size();
            if (v.size() != dim) throw TransportError("embedding dimension mismatch across batch");
            double inv = 1.0 / std::sqrt(norm2);
            for (double& x : v) x *= inv;
            out.push_back(std::move(v));
        }
        return out;
    }

private:
    std::string post_cached(const std::string& api_path, const std::string& body,
                            const std::optional<Sidecar>& sidecar, CallMeta* meta) {
        if (static_cast<double>(body.size()) > config_.max_payload_mb * 1024.0 * 1024.0)
            throw TransportError("payload of " + std::to_string(body.size()) +
                                 " bytes exceeds the " + std::to_string(config_.max_payload_mb) +
                                 " MB limit");
        std::string key = cache_key(config_.model_name, body);
        if (auto hit = cache_->lookup(key)) {
            if (meta) *meta = {cache_->in_snapshot(key), 0, 0};
            return *hit;
        }

        int total_slept_ms = 0;
        const int ceiling_ms = static_cast<int>(config_.retry_ceiling_s * 1000.0);
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                int delay = std::min(250 * (1 << (attempt - 1)), 8000);
                delay = std::min(delay, ceiling_ms - total_slept_ms);
                if (delay > 0) {
                    sleeper_(delay);
                    total_slept_ms += delay;
                }
            }
            auto started = std::chrono::steady_clock::now();
            TransportResult r = transport_->post_json(api_path, body, sidecar);
            auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - started)
                               .count();
            if (r.success()) {
                cache_->store(key, config_.model_name, r.body);
                if (meta)
                    *meta = {false,
                             transport_->deterministic_timing() ? 0 : static_cast<int>(elapsed),
                             attempt + 1};
                return r.body;
            }
            last_error = r.error.empty() ? ("HTTP " + std::to_string(r.status) +
                                            (r.body.empty() ? "" : ": " + r.body.substr(0, 200)))
                                         : r.error;
            if (!r.retryable()) break;
        }
        throw TransportError("request to " + config_.endpoint_url + api_path +
                             " failed after retries: " + last_error);
    }

    ModelClientConfig config_;
    std::shared_ptr<CacheStore> cache_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
};

} // namespace typobench::gateway
