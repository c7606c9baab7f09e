// Attack generators: Random Class, Class Based (embedding / text model /
// vision model), and Descriptive (text / vision model). Every instance
// carries provenance sufficient to re-derive it: RNG key, similarity
// ranking, or the full prompt/response transcript per attempt.

#pragma once

#include "typobench/attack_types.hpp"
#include "typobench/corpus.hpp"
#include "typobench/detail/rng.hpp"
#include "typobench/gateway.hpp"
#include "typobench/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace typobench::attacks {

struct GenerationSettings {
    std::uint64_t master_seed = 0;
    int retry_budget = 3; // chat attempts per sample before falling back
    std::size_t choices_list_max = 250;
    prompts::Templates templates;
    std::string subject_noun = "object";
};

// ---------------------------------------------------------------------------
// vocabulary matching (shared with the evaluator's answer fallback tier)

struct ClassMatch {
    std::string matched; // display form from the vocabulary
    std::string path;    // "exact" | "substring"
};

inline std::string strip_punct(std::string s) {
    auto is_punct = [](char c) {
        return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' ||
               c == '\'' || c == '"' || c == '`';
    };
    std::size_t b = 0, e = s.size();
    while (b < e && (is_punct(s[b]) || detail::is_space(s[b]))) ++b;
    while (e > b && (is_punct(s[e - 1]) || detail::is_space(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

/// Case-fold exact match first, then unique-substring; two or more
/// substring hits are ambiguous and count as no match.
inline std::optional<ClassMatch> match_class(const std::string& response,
                                             const std::vector<std::string>& classes) {
    std::string canon = detail::class_key(strip_punct(response));
    for (const auto& c : classes)
        if (detail::class_key(c) == canon) return ClassMatch{c, "exact"};

    std::string folded = detail::casefold(detail::collapse_ws(response));
    const std::string* hit = nullptr;
    int hits = 0;
    for (const auto& c : classes) {
        if (folded.find(detail::class_key(c)) != std::string::npos) {
            ++hits;
            hit = &c;
        }
    }
    if (hits == 1) return ClassMatch{*hit, "substring"};
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// structured-reply parsing for descriptive attacks

struct StructuredAttack {
    std::string deceiving_class;
    std::string description;
    std::string parse_path; // "strict_json" | "json_substring" | "kv_regex"
};

namespace parsedetail {

inline std::optional<StructuredAttack> from_json_value(const detail::json& j,
                                                       const std::string& path) {
    if (!j.is_object()) return std::nullopt;
    if (!j.contains("deceiving_class") || !j.at("deceiving_class").is_string())
        return std::nullopt;
    if (!j.contains("description") || !j.at("description").is_string()) return std::nullopt;
    StructuredAttack out{detail::collapse_ws(j.at("deceiving_class").get<std::string>()),
                         detail::trim(j.at("description").get<std::string>()), path};
    if (out.deceiving_class.empty() || out.description.empty()) return std::nullopt;
    return out;
}

inline std::string strip_code_fences(const std::string& text) {
    auto first = text.find("```");
    if (first == std::string::npos) return text;
    auto line_end = text.find('\n', first);
    if (line_end == std::string::npos) return text;
    auto close = text.find("```", line_end);
    if (close == std::string::npos) return text;
    return text.substr(line_end + 1, close - line_end - 1);
}

/// First balanced {...} block, brace-counted outside string literals.
inline std::optional<std::string> first_json_object(const std::string& text) {
    auto start = text.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            if (--depth == 0) return text.substr(start, i - start + 1);
        }
    }
    return std::nullopt;
}

} // namespace parsedetail

/// Strict JSON, then first JSON-object substring, then key:value lines.
inline std::optional<StructuredAttack> parse_structured_attack(const std::string& raw) {
    using detail::json;
    std::string text = detail::trim(parsedetail::strip_code_fences(raw));

    json j = json::parse(text, nullptr, false);
    if (!j.is_discarded())
        if (auto out = parsedetail::from_json_value(j, "strict_json")) return out;

    if (auto block = parsedetail::first_json_object(text)) {
        json j2 = json::parse(*block, nullptr, false);
        if (!j2.is_discarded())
            if (auto out = parsedetail::from_json_value(j2, "json_substring")) return out;
    }

    static const std::regex class_re(
        R"re((?:deceiving[_ ]?class|class)"?\s*[:=]\s*"?([^"\n]+?)"?\s*,?\s*$)re",
        std::regex::icase);
    static const std::regex desc_re(R"re(description"?\s*[:=]\s*"?([^"\n]+?)"?\s*,?\s*$)re",
                                    std::regex::icase);
    std::string cls, desc;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::smatch m;
        if (cls.empty() && std::regex_search(line, m, class_re))
            cls = detail::collapse_ws(m[1].str());
        else if (desc.empty() && std::regex_search(line, m, desc_re))
            desc = detail::trim(m[1].str());
    }
    if (!cls.empty() && !desc.empty()) return StructuredAttack{cls, desc, "kv_regex"};
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// generators

/// Uniform draw from the vocabulary minus the label, keyed by
/// (master seed, sample id).
inline AttackInstance random_class_attack(const corpus::Sample& sample,
                                          const std::vector<std::string>& classes,
                                          std::uint64_t master_seed) {
    if (classes.size() < 2)
        throw ValidationError("random_class_attack: vocabulary needs at least 2 classes");
    auto label_key = detail::class_key(sample.label);
    std::vector<std::string> eligible;
    for (const auto& c : classes)
        if (detail::class_key(c) != label_key) eligible.push_back(c);
    if (eligible.empty())
        throw ValidationError("random_class_attack: no class differs from the label");

    AttackInstance a;
    a.generator_id = GeneratorId::random_class;
    a.sample_id = sample.id;
    a.seed = detail::derive_seed(master_seed, "random_class", sample.id);
    detail::SplitMix64 rng(a.seed);
    a.deceiving_class = eligible[rng.bounded(eligible.size())];
    a.provenance = {{"kind", "rng"},
                    {"domain", "random_class"},
                    {"eligible", eligible.size()},
                    {"master_seed", master_seed}};
    return a;
}

/// argmax cosine similarity against the reference embedding (the label's
/// class-text embedding by default, or an image embedding when supplied),
/// label excluded, ties broken by vocabulary order. Provenance keeps the
/// full ranking.
inline AttackInstance class_attack_via_embeddings(const corpus::Sample& sample,
                                                  const std::vector<std::string>& classes,
                                                  const EmbeddingTable& table,
                                                  const std::vector<double>* image_reference =
                                                      nullptr) {
    if (classes.size() < 2)
        throw ValidationError("class_attack_via_embeddings: vocabulary needs at least 2 classes");
    const auto& ref = image_reference ? *image_reference : table.at(sample.label);
    auto label_key = detail::class_key(sample.label);

    struct Scored {
        const std::string* name;
        double sim;
    };
    std::vector<Scored> scored;
    const std::string* best = nullptr;
    double best_sim = 0.0;
    for (const auto& c : classes) {
        if (detail::class_key(c) == label_key) continue;
        const auto& v = table.at(c);
        if (v.size() != ref.size())
            throw ValidationError("class_attack_via_embeddings: dimension mismatch for '" + c + "'");
        double sim = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) sim += ref[i] * v[i];
        scored.push_back({&c, sim});
        if (best == nullptr || sim > best_sim) {
            best = &c;
            best_sim = sim;
        }
    }
    if (best == nullptr)
        throw ValidationError("class_attack_via_embeddings: no class differs from the label");

    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) { return a.sim > b.sim; });
    detail::json ranking = detail::json::array();
    for (const auto& s : scored) ranking.push_back({*s.name, s.sim});

    AttackInstance a;
    a.generator_id = GeneratorId::class_ve;
    a.sample_id = sample.id;
    a.deceiving_class = *best;
    a.provenance = {{"kind", "embedding"},
                    {"provider_id", table.provider_id},
                    {"dim", table.dim},
                    {"mode", image_reference ? "image_to_text" : "text_to_text"},
                    {"reference", image_reference ? "<image>" : sample.label},
                    {"ranking", std::move(ranking)}};
    return a;
}

namespace gendetail {

inline std::string choices_suffix(const prompts::Templates& t,
                                  const std::vector<std::string>& classes,
                                  const std::string& label) {
    auto label_key = detail::class_key(label);
    std::string joined;
    for (const auto& c : classes) {
        if (detail::class_key(c) == label_key) continue;
        if (!joined.empty()) joined += ", ";
        joined += c;
    }
    return prompts::substitute(t.class_query_choices_suffix, {{"choices", joined}});
}

inline gateway::Sidecar generation_sidecar(const std::string& kind, const corpus::Sample& sample,
                                           const std::vector<std::string>& classes) {
    gateway::Sidecar sc;
    sc.kind = kind;
    sc.ground_truth = sample.label;
    sc.option_list = classes;
    return sc;
}

} // namespace gendetail

/// Ask a chat model for the most confusable class. with_image selects the
/// vision variant. On a label echo or an unmatched answer the prompt is
/// retried with a corrective suffix (identical resends would only replay the
/// cached reply); after the budget it falls back to a random-class draw with
/// flagged provenance.
inline AttackInstance class_attack_via_model(const corpus::Sample& sample,
                                             const std::vector<std::string>& classes,
                                             gateway::ModelClient& client, bool with_image,
                                             const GenerationSettings& settings,
                                             const std::optional<std::vector<std::uint8_t>>& image_png =
                                                 std::nullopt) {
    if (classes.size() < 2)
        throw ValidationError("class_attack_via_model: vocabulary needs at least 2 classes");
    const auto& t = settings.templates;
    auto hashes = prompts::hashes_of(t);
    std::string base_prompt = prompts::substitute(
        t.class_query, {{"subject_noun", settings.subject_noun}, {"label", sample.label}});
    if (classes.size() <= settings.choices_list_max)
        base_prompt += gendetail::choices_suffix(t, classes, sample.label);

    auto label_key = detail::class_key(sample.label);
    auto sidecar = gendetail::generation_sidecar("class_query", sample, classes);

    detail::json attempts = detail::json::array();
    std::string prompt = base_prompt;
    std::string previous;
    for (int attempt = 1; attempt <= settings.retry_budget; ++attempt) {
        if (attempt > 1)
            prompt = base_prompt + prompts::substitute(t.class_query_retry_suffix,
                                                       {{"previous", previous},
                                                        {"label", sample.label}});
        gateway::ChatMessage msg{"user", prompt,
                                 with_image ? image_png : std::optional<std::vector<std::uint8_t>>{}};
        gateway::CallMeta meta;
        std::string response = client.chat({msg}, sidecar, &meta);
        previous = response;

        auto match = match_class(response, classes);
        std::string outcome = !match ? "no_match"
                             : detail::class_key(match->matched) == label_key ? "label_echo"
                                                                              : match->path;
        attempts.push_back({{"prompt", prompt},
                            {"response", response},
                            {"outcome", outcome},
                            {"from_cache", meta.from_cache}});
        if (match && detail::class_key(match->matched) != label_key) {
            AttackInstance a;
            a.generator_id = with_image ? GeneratorId::class_lvlm : GeneratorId::class_llm;
            a.sample_id = sample.id;
            a.deceiving_class = match->matched;
            a.provenance = {{"kind", "chat"},
                            {"with_image", with_image},
                            {"template_hash", hashes.class_query},
                            {"attempts", std::move(attempts)}};
            return a;
        }
    }

    AttackInstance fallback = random_class_attack(sample, classes, settings.master_seed);
    fallback.generator_id = with_image ? GeneratorId::class_lvlm : GeneratorId::class_llm;
    fallback.fallback = true;
    fallback.provenance = {{"kind", "chat"},
                           {"with_image", with_image},
                           {"template_hash", hashes.class_query},
                           {"attempts", std::move(attempts)},
                           {"fallback", "random_class"},
                           {"fallback_provenance", fallback.provenance}};
    return fallback;
}

/// Ask the model to recommend an attack against itself: a deceiving class
/// (not constrained to the vocabulary) plus a one-sentence description.
/// Parse failures and label echoes retry, then fall back to a class-only
/// random attack with flagged provenance.
inline AttackInstance descriptive_attack(const corpus::Sample& sample,
                                         const std::vector<std::string>& classes,
                                         gateway::ModelClient& client, bool with_image,
                                         const GenerationSettings& settings,
                                         const std::optional<std::vector<std::uint8_t>>& image_png =
                                             std::nullopt) {
    const auto& t = settings.templates;
    auto hashes = prompts::hashes_of(t);
    std::string base_prompt = prompts::substitute(
        t.desc_query, {{"subject_noun", settings.subject_noun}, {"label", sample.label}});
    auto label_key = detail::class_key(sample.label);
    auto sidecar = gendetail::generation_sidecar("desc_query", sample, classes);

    detail::json attempts = detail::json::array();
    std::string prompt = base_prompt;
    std::string previous;
    for (int attempt = 1; attempt <= settings.retry_budget; ++attempt) {
        if (attempt > 1)
            prompt = base_prompt +
                     prompts::substitute(t.desc_query_retry_suffix,
                                         {{"previous", previous.substr(0, 200)},
                                          {"label", sample.label}});
        gateway::ChatMessage msg{"user", prompt,
                                 with_image ? image_png : std::optional<std::vector<std::uint8_t>>{}};
        gateway::CallMeta meta;
        std::string response = client.chat({msg}, sidecar, &meta);
        previous = response;

        auto parsed = parse_structured_attack(response);
        std::string outcome = !parsed ? "parse_failure"
                             : detail::class_key(parsed->deceiving_class) == label_key
                                 ? "label_echo"
                                 : parsed->parse_path;
        attempts.push_back({{"prompt", prompt},
                            {"response", response},
                            {"outcome", outcome},
                            {"from_cache", meta.from_cache}});
        if (parsed && detail::class_key(parsed->deceiving_class) != label_key) {
            AttackInstance a;
            a.generator_id = with_image ? GeneratorId::desc_lvlm : GeneratorId::desc_llm;
            a.sample_id = sample.id;
            a.deceiving_class = parsed->deceiving_class;
            a.description = parsed->description;
            a.provenance = {{"kind", "chat"},
                            {"with_image", with_image},
                            {"template_hash", hashes.desc_query},
                            {"parse_path", parsed->parse_path},
                            {"attempts", std::move(attempts)}};
            return a;
        }
    }

    AttackInstance fallback = random_class_attack(sample, classes, settings.master_seed);
    fallback.generator_id = with_image ? GeneratorId::desc_lvlm : GeneratorId::desc_llm;
    fallback.fallback = true;
    fallback.description.reset(); // class-only fallback
    fallback.provenance = {{"kind", "chat"},
                           {"with_image", with_image},
                           {"template_hash", hashes.desc_query},
                           {"attempts", std::move(attempts)},
                           {"fallback", "random_class"},
                           {"fallback_provenance", fallback.provenance}};
    return fallback;
}

enum class DescriptionMode { own, none, random_other };

inline std::string to_string(DescriptionMode m) {
    switch (m) {
        case DescriptionMode::own: return "own";
        case DescriptionMode::none: return "none";
        case DescriptionMode::random_other: return "random_other";
    }
    throw ValidationError("unknown description mode");
}

inline DescriptionMode description_mode_from_string(const std::string& s) {
    if (s == "own") return DescriptionMode::own;
    if (s == "none") return DescriptionMode::none;
    if (s == "random_other") return DescriptionMode::random_other;
    throw ConfigError("unknown description mode '" + s + "'");
}

/// Description ablation: keep the attack's own description, drop it, or
/// substitute a seeded draw of another sample's description. The deceiving
/// class never changes.
inline AttackInstance swap_description(const AttackInstance& attack, DescriptionMode mode,
                                       const std::vector<AttackInstance>& pool,
                                       std::uint64_t master_seed) {
    if (!is_descriptive(attack.generator_id))
        throw ValidationError("swap_description: attack is not descriptive");
    AttackInstance out = attack;
    switch (mode) {
        case DescriptionMode::own:
            return out;
        case DescriptionMode::none:
            out.description.reset();
            return out;
        case DescriptionMode::random_other: {
            std::vector<const AttackInstance*> eligible;
            for (const auto& other : pool)
                if (other.sample_id != attack.sample_id && other.description)
                    eligible.push_back(&other);
            if (eligible.empty())
                throw ValidationError(
                    "swap_description: no other sample with a description in the pool");
            auto rng = detail::keyed_rng(master_seed, "desc_swap", attack.sample_id);
            const AttackInstance* pick = eligible[rng.bounded(eligible.size())];
            out.description = pick->description;
            out.provenance["description_from"] = pick->sample_id;
            return out;
        }
    }
    throw ValidationError("unknown description mode");
}

// ---------------------------------------------------------------------------
// embedding table construction + persistence

/// Embed every class name through the fixed text template.
inline EmbeddingTable build_embedding_table(const std::vector<std::string>& classes,
                                            gateway::ModelClient& client,
                                            const prompts::Templates& templates) {
    if (classes.empty()) throw ValidationError("build_embedding_table: empty vocabulary");
    EmbeddingTable table;
    table.provider_id = client.config().model_name;
    for (const auto& c : classes) {
        std::string text = prompts::substitute(templates.embed_template, {{"class", c}});
        auto rows = client.embed({text});
        table.entries[c] = std::move(rows[0]);
    }
    table.dim = table.entries.begin()->second.size();
    table.validate();
    return table;
}

/// One AttackInstance per line, sample order preserved.
inline void save_attacks(const std::filesystem::path& path,
                         const std::vector<AttackInstance>& attacks) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (const auto& a : attacks) out << a.to_json().dump() << "\n";
}

inline std::vector<AttackInstance> load_attacks(const std::filesystem::path& path) {
    std::vector<AttackInstance> out;
    for (const auto& line : detail::read_jsonl(path)) out.push_back(AttackInstance::from_json(line));
    return out;
}

} // namespace typobench::attacks
