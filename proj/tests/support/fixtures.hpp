// Shared test fixtures: deterministic synthetic images and datasets, a
// scripted transport for retry/fallback paths, and a temp-dir guard.

#pragma once

#include "typobench/corpus.hpp"
#include "typobench/detail/rng.hpp"
#include "typobench/gateway.hpp"
#include "typobench/image.hpp"

#include <atomic>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <unistd.h>

namespace tfx {

namespace fs = std::filesystem;
using typobench::detail::json;

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "typobench") {
        static std::atomic<int> counter{0};
        auto base = fs::temp_directory_path();
        path_ = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                        std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

/// Deterministic RGB pattern keyed by seed.
inline typobench::img::Raster synth_image(int width, int height, std::uint64_t seed) {
    typobench::img::Raster out(width, height);
    typobench::detail::SplitMix64 rng(seed);
    std::uint8_t base_r = static_cast<std::uint8_t>(rng.next() % 200);
    std::uint8_t base_g = static_cast<std::uint8_t>(rng.next() % 200);
    std::uint8_t base_b = static_cast<std::uint8_t>(rng.next() % 200);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out.set(x, y,
                    {static_cast<std::uint8_t>((base_r + x) % 256),
                     static_cast<std::uint8_t>((base_g + y) % 256),
                     static_cast<std::uint8_t>((base_b + x + y) % 256)});
    return out;
}

struct SyntheticDatasetSpec {
    std::string name = "synth";
    int n_classes = 5;
    int n_samples = 20;
    int width = 128;
    int height = 112;
    std::uint64_t seed = 7;
    std::string subject_noun = "widget";
    std::vector<std::string> class_names; // defaults to kind0..kindN
};

/// Writes images plus a manifest file; returns the manifest path.
inline fs::path write_synthetic_dataset(const fs::path& dir, const SyntheticDatasetSpec& spec) {
    fs::create_directories(dir / "images");
    json doc;
    doc["name"] = spec.name;
    doc["subject_noun"] = spec.subject_noun;
    doc["sample_cap"] = std::max(spec.n_samples, 1000);
    json classes = json::array();
    std::vector<std::string> class_names = spec.class_names;
    if (class_names.empty())
        for (int c = 0; c < spec.n_classes; ++c) class_names.push_back("kind" + std::to_string(c));
    for (const auto& name : class_names) classes.push_back(name);
    doc["classes"] = classes;
    json samples = json::array();
    for (int i = 0; i < spec.n_samples; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "s%05d", i);
        std::string file = "images/" + std::string(id) + ".png";
        auto raster = synth_image(spec.width, spec.height,
                                  typobench::detail::derive_seed(spec.seed, spec.name, id));
        typobench::img::save_png(raster, dir / file);
        samples.push_back({{"id", id},
                           {"image", file},
                           {"label", class_names[static_cast<std::size_t>(i) % class_names.size()]}});
    }
    doc["samples"] = samples;
    fs::path manifest = dir / (spec.name + ".json");
    typobench::detail::write_text_file(manifest, doc.dump(2));
    return manifest;
}

/// Transport returning scripted assistant contents (or failures) in order.
class ScriptedTransport : public typobench::gateway::Transport {
public:
    struct Step {
        bool fail = false;
        int status = 200;
        std::string content; // assistant text when ok
    };

    explicit ScriptedTransport(std::vector<Step> steps) : steps_(steps.begin(), steps.end()) {}

    static Step ok(std::string content) { return {false, 200, std::move(content)}; }
    static Step http_error(int status) { return {true, status, ""}; }
    static Step network_error() { return {false, 0, ""}; }

    bool deterministic_timing() const override { return true; }

    std::vector<std::string> bodies() const {
        std::lock_guard lock(mutex_);
        return bodies_;
    }

private:
    typobench::gateway::TransportResult do_post(
        const std::string&, const std::string& body,
        const std::optional<typobench::gateway::Sidecar>&) override {
        std::lock_guard lock(mutex_);
        bodies_.push_back(body);
        if (steps_.empty()) return {true, 500, "", "script exhausted"};
        Step s = steps_.front();
        steps_.pop_front();
        if (!s.fail && s.status == 0) return {false, 0, "", "injected network failure"};
        if (s.fail) return {true, s.status, "", "injected HTTP failure"};
        return {true, 200,
                typobench::gateway::mockdetail::wrap_chat_response("scripted", s.content).dump(),
                ""};
    }

    mutable std::mutex mutex_;
    std::deque<Step> steps_;
    std::vector<std::string> bodies_;
};

/// Records requested sleeps instead of sleeping.
struct FakeSleeper {
    std::shared_ptr<std::vector<int>> slept = std::make_shared<std::vector<int>>();
    void operator()(int ms) const { slept->push_back(ms); }
};

} // namespace tfx
