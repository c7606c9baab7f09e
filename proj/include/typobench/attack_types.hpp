// Attack data model shared by the generators, the compositor, and the
// evaluator: one AttackInstance per (sample, generator) with enough
// provenance to re-derive it.

#pragma once

#include "typobench/detail/jsonl.hpp"
#include "typobench/detail/strings.hpp"
#include "typobench/errors.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace typobench::attacks {

enum class GeneratorId {
    random_class,
    class_ve,
    class_llm,
    class_lvlm,
    desc_llm,
    desc_lvlm,
};

inline constexpr std::array<GeneratorId, 6> kAllGenerators = {
    GeneratorId::random_class, GeneratorId::class_ve,  GeneratorId::class_llm,
    GeneratorId::class_lvlm,   GeneratorId::desc_llm,  GeneratorId::desc_lvlm,
};

inline std::string to_string(GeneratorId id) {
    switch (id) {
        case GeneratorId::random_class: return "random_class";
        case GeneratorId::class_ve: return "class_ve";
        case GeneratorId::class_llm: return "class_llm";
        case GeneratorId::class_lvlm: return "class_lvlm";
        case GeneratorId::desc_llm: return "desc_llm";
        case GeneratorId::desc_lvlm: return "desc_lvlm";
    }
    throw ValidationError("unknown generator id");
}

inline GeneratorId generator_from_string(const std::string& s) {
    for (auto g : kAllGenerators)
        if (to_string(g) == s) return g;
    throw ConfigError("unknown generator '" + s + "'");
}

inline bool is_descriptive(GeneratorId id) {
    return id == GeneratorId::desc_llm || id == GeneratorId::desc_lvlm;
}

inline bool needs_chat_model(GeneratorId id) {
    return id == GeneratorId::class_llm || id == GeneratorId::class_lvlm || is_descriptive(id);
}

struct AttackInstance {
    GeneratorId generator_id = GeneratorId::random_class;
    std::string deceiving_class; // never equals the sample label, case-folded
    std::optional<std::string> description;
    std::string sample_id;
    std::uint64_t seed = 0;
    bool fallback = false;        // generator exhausted retries and fell back
    detail::json provenance;      // transcripts / similarity ranking / rng key

    detail::json to_json() const {
        detail::json j{{"generator_id", to_string(generator_id)},
                       {"sample_id", sample_id},
                       {"deceiving_class", deceiving_class},
                       {"seed", seed},
                       {"fallback", fallback},
                       {"provenance", provenance}};
        if (description) j["description"] = *description;
        return j;
    }

    static AttackInstance from_json(const detail::json& j) {
        AttackInstance a;
        a.generator_id = generator_from_string(j.at("generator_id").get<std::string>());
        a.sample_id = j.at("sample_id").get<std::string>();
        a.deceiving_class = j.at("deceiving_class").get<std::string>();
        a.seed = j.at("seed").get<std::uint64_t>();
        a.fallback = j.value("fallback", false);
        if (j.contains("provenance")) a.provenance = j.at("provenance");
        if (j.contains("description")) a.description = j.at("description").get<std::string>();
        return a;
    }
};

struct EmbeddingTable {
    std::map<std::string, std::vector<double>> entries; // class name -> unit vector
    std::size_t dim = 0;
    std::string provider_id;

    void validate() const {
        for (const auto& [name, vec] : entries) {
            if (vec.size() != dim)
                throw ValidationError("EmbeddingTable: '" + name + "' has dim " +
                                      std::to_string(vec.size()) + ", expected " +
                                      std::to_string(dim));
            double norm2 = 0.0;
            for (double v : vec) norm2 += v * v;
            if (std::fabs(std::sqrt(norm2) - 1.0) > 1e-6)
                throw ValidationError("EmbeddingTable: '" + name + "' is not unit-norm");
        }
    }

    const std::vector<double>& at(const std::string& name) const {
        auto it = entries.find(name);
        if (it == entries.end())
            throw ValidationError("EmbeddingTable: missing embedding for '" + name + "'");
        return it->second;
    }
};

} // namespace typobench::attacks
