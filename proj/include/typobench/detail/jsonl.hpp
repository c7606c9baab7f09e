#pragma once

#include "typobench/errors.hpp"

// prefer the packaged header; fall back to the vendored single header
#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace typobench::detail {

using json = nlohmann::json;

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<json> lines;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad JSON line");
        lines.push_back(std::move(j));
    }
    return lines;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": bad JSON");
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

} // namespace typobench::detail
