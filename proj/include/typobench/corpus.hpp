// Dataset ingestion: one JSON manifest per classification dataset, with the
// class vocabulary, the subject noun for question prompts, and the capped
// sample list. Manifests are immutable after load and safe to share.

#pragma once

#include "typobench/detail/jsonl.hpp"
#include "typobench/detail/strings.hpp"
#include "typobench/errors.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace typobench::corpus {

inline constexpr int kDefaultSampleCap = 1000;

struct Sample {
    std::string id;
    std::filesystem::path image_path; // absolute after load
    std::string label;                // ground truth y, display form

    bool operator==(const Sample&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::string subject_noun;
    std::vector<std::string> classes; // display forms, unique under class_key
    std::vector<Sample> samples;      // sorted by id, size <= sample_cap
    int sample_cap = kDefaultSampleCap;
    std::size_t total_samples_listed = 0; // before truncation

    bool operator==(const DatasetManifest& o) const {
        return name == o.name && subject_noun == o.subject_noun && classes == o.classes &&
               samples == o.samples && sample_cap == o.sample_cap;
    }

    bool has_class(std::string_view c) const {
        auto key = detail::class_key(c);
        return std::any_of(classes.begin(), classes.end(),
                           [&](const std::string& k) { return detail::class_key(k) == key; });
    }
};

/// Question-prompt nouns for the five stock datasets. Custom manifests
/// declare their own noun instead.
inline const std::map<std::string, std::string>& builtin_subject_nouns() {
    static const std::map<std::string, std::string> nouns = {
        {"oxford_pets", "pet"},   {"stanford_cars", "car"}, {"flowers", "flower"},
        {"aircraft", "aircraft"}, {"food101", "dish"},
    };
    return nouns;
}

inline std::string subject_noun_for(const std::string& dataset_name,
                                    const std::string& declared_noun = "") {
    std::string noun = detail::collapse_ws(declared_noun);
    if (!noun.empty()) return noun;
    auto it = builtin_subject_nouns().find(dataset_name);
    if (it != builtin_subject_nouns().end()) return it->second;
    throw ConfigError("dataset '" + dataset_name +
                      "' declares no subject_noun and is not a built-in");
}

/// Load and validate a manifest file. Classes are whitespace-normalized,
/// labels checked against the vocabulary, and the sample list truncated to
/// the cap by keeping the lexicographically-first ids.
inline DatasetManifest load_manifest(const std::filesystem::path& path,
                                     std::optional<int> cap_override = std::nullopt) {
    namespace fs = std::filesystem;
    detail::json doc = detail::read_json_file(path);
    if (!doc.is_object()) throw ValidationError(path.string() + ": manifest must be an object");

    DatasetManifest m;
    try {
        m.name = doc.at("name").get<std::string>();
        if (doc.contains("sample_cap")) m.sample_cap = doc.at("sample_cap").get<int>();
        if (doc.contains("subject_noun")) m.subject_noun = doc.at("subject_noun").get<std::string>();
        for (const auto& c : doc.at("classes")) m.classes.push_back(c.get<std::string>());
        for (const auto& s : doc.at("samples")) {
            Sample sample;
            sample.id = s.at("id").get<std::string>();
            sample.image_path = s.at("image").get<std::string>();
            sample.label = s.at("label").get<std::string>();
            m.samples.push_back(std::move(sample));
        }
    } catch (const detail::json::exception& e) {
        throw ValidationError(path.string() + ": manifest schema error: " + e.what());
    }
    if (cap_override) m.sample_cap = *cap_override;
    if (m.name.empty()) throw ValidationError(path.string() + ": empty dataset name");
    if (m.sample_cap <= 0) throw ValidationError(path.string() + ": sample_cap must be positive");
    m.subject_noun = subject_noun_for(m.name, m.subject_noun);

    // normalize + uniqueness of the vocabulary
    std::map<std::string, std::string> seen; // key -> display form
    for (auto& c : m.classes) {
        c = detail::collapse_ws(c);
        if (c.empty()) throw ValidationError(path.string() + ": empty class name");
        auto key = detail::class_key(c);
        auto [it, inserted] = seen.emplace(key, c);
        if (!inserted)
            throw ValidationError(path.string() + ": duplicate class '" + c + "' (clashes with '" +
                                  it->second + "')");
    }

    const fs::path base = fs::absolute(path).parent_path();
    std::map<std::string, const Sample*> ids;
    for (auto& s : m.samples) {
        if (s.id.empty()) throw ValidationError(path.string() + ": sample with empty id");
        if (!ids.emplace(s.id, &s).second)
            throw ValidationError(path.string() + ": duplicate sample id '" + s.id + "'");
        s.label = detail::collapse_ws(s.label);
        auto key = detail::class_key(s.label);
        auto it = seen.find(key);
        if (it == seen.end())
            throw ValidationError(path.string() + ": sample '" + s.id + "' label '" + s.label +
                                  "' not in classes");
        s.label = it->second; // canonical display form
        if (s.image_path.is_relative()) s.image_path = base / s.image_path;
        s.image_path = s.image_path.lexically_normal();
    }

    m.total_samples_listed = m.samples.size();
    std::sort(m.samples.begin(), m.samples.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    if (m.samples.size() > static_cast<std::size_t>(m.sample_cap))
        m.samples.resize(static_cast<std::size_t>(m.sample_cap));
    return m;
}

/// Serialize back to the manifest schema. Image paths are written relative
/// to dir when possible so round-trips stay portable.
inline detail::json manifest_to_json(const DatasetManifest& m,
                                     const std::filesystem::path& dir = {}) {
    detail::json doc;
    doc["name"] = m.name;
    doc["subject_noun"] = m.subject_noun;
    doc["sample_cap"] = m.sample_cap;
    doc["classes"] = m.classes;
    auto samples = detail::json::array();
    for (const auto& s : m.samples) {
        std::filesystem::path p = s.image_path;
        if (!dir.empty()) {
            auto rel = p.lexically_relative(std::filesystem::absolute(dir));
            if (!rel.empty() && rel.native() != "") p = rel;
        }
        samples.push_back({{"id", s.id}, {"image", p.generic_string()}, {"label", s.label}});
    }
    doc["samples"] = std::move(samples);
    return doc;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    detail::write_text_file(path, manifest_to_json(m, path.parent_path()).dump(2) + "\n");
}

/// Build a manifest from an ImageFolder-style tree: root/<class>/<image>.
inline DatasetManifest manifest_from_directory(const std::filesystem::path& root,
                                               const std::string& name,
                                               const std::string& subject_noun,
                                               int sample_cap = kDefaultSampleCap) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw ConfigError("not a directory: " + root.string());
    DatasetManifest m;
    m.name = name;
    m.subject_noun = subject_noun_for(name, subject_noun);
    m.sample_cap = sample_cap;

    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw ValidationError("no class subdirectories under " + root.string());

    for (const auto& dir : class_dirs) {
        std::string cls = detail::collapse_ws(dir.filename().string());
        m.classes.push_back(cls);
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(dir))
            if (f.is_regular_file()) files.push_back(f.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Sample s;
            s.id = cls + "/" + f.filename().string();
            s.image_path = fs::absolute(f).lexically_normal();
            s.label = cls;
            m.samples.push_back(std::move(s));
        }
    }
    m.total_samples_listed = m.samples.size();
    std::sort(m.samples.begin(), m.samples.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    if (m.samples.size() > static_cast<std::size_t>(m.sample_cap))
        m.samples.resize(static_cast<std::size_t>(m.sample_cap));
    return m;
}

} // namespace typobench::corpus
