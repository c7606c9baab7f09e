// Run configuration: one JSON document drives every subcommand. Paths in
// the file resolve relative to the config file's directory; CLI flags
// override individual fields after load.

#pragma once

#include "typobench/attacks.hpp"
#include "typobench/compositor.hpp"
#include "typobench/detail/jsonl.hpp"
#include "typobench/evaluator.hpp"
#include "typobench/gateway.hpp"
#include "typobench/prompts.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace typobench::config {

struct RunConfig {
    std::string run_id = "run";
    std::uint64_t master_seed = 0;
    std::vector<std::filesystem::path> datasets; // manifest files
    std::vector<attacks::GeneratorId> generators;
    std::optional<gateway::ModelClientConfig> attacker_model;
    std::vector<gateway::ModelClientConfig> evaluated_models;
    std::optional<gateway::ModelClientConfig> embedding_model;
    compositor::LayoutSpec layout;
    std::vector<evaluator::PromptVariant> prompt_variants = {evaluator::PromptVariant::standard};
    std::vector<attacks::DescriptionMode> description_modes = {attacks::DescriptionMode::own};
    int parallelism = 8;
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path out_dir = "out";
    std::optional<int> sample_cap;
    int retry_budget = 3;
    bool write_images = false;
    bool per_condition_shuffle = false;
    bool no_text_original_geometry = false;
    bool containment_grading = false;
    bool ve_image_mode = false;
    std::optional<std::filesystem::path> templates_file;
    prompts::Templates templates; // resolved

    std::filesystem::path run_dir() const { return out_dir / run_id; }
    std::filesystem::path attacks_dir() const { return run_dir() / "attacks"; }
    std::filesystem::path results_path() const { return run_dir() / "results.jsonl"; }
    std::filesystem::path run_meta_path() const { return run_dir() / "run.json"; }
    std::filesystem::path cache_path() const { return cache_dir / "responses.jsonl"; }

    std::filesystem::path attack_file(const std::string& dataset,
                                      attacks::GeneratorId gen) const {
        return attacks_dir() / (dataset + "__" + attacks::to_string(gen) + ".jsonl");
    }

    bool wants(attacks::GeneratorId gen) const {
        return std::find(generators.begin(), generators.end(), gen) != generators.end();
    }

    evaluator::EvalSettings eval_settings() const {
        evaluator::EvalSettings s;
        s.run_id = run_id;
        s.master_seed = master_seed;
        s.layout = layout;
        s.generators = generators;
        s.prompt_variants = prompt_variants;
        s.description_modes = description_modes;
        s.per_condition_shuffle = per_condition_shuffle;
        s.no_text_original_geometry = no_text_original_geometry;
        s.containment_grading = containment_grading;
        s.write_images = write_images;
        s.images_dir = run_dir();
        s.templates = templates;
        return s;
    }
};

namespace cfgdetail {

inline img::Rgb rgb_from_json(const detail::json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("color must be [r, g, b]");
    return {j[0].get<std::uint8_t>(), j[1].get<std::uint8_t>(), j[2].get<std::uint8_t>()};
}

inline compositor::LayoutSpec layout_from_json(const detail::json& j) {
    compositor::LayoutSpec layout;
    if (j.contains("band_height_fraction"))
        layout.band_height_fraction = j.at("band_height_fraction").get<double>();
    if (j.contains("font_px_max")) layout.font_px_max = j.at("font_px_max").get<int>();
    if (j.contains("margin_px")) layout.margin_px = j.at("margin_px").get<int>();
    if (j.contains("text_color")) layout.text_color = rgb_from_json(j.at("text_color"));
    if (j.contains("band_color")) layout.band_color = rgb_from_json(j.at("band_color"));
    if (j.contains("class_band"))
        layout.class_band = compositor::band_from_string(j.at("class_band").get<std::string>());
    if (j.contains("description_band"))
        layout.description_band =
            compositor::band_from_string(j.at("description_band").get<std::string>());
    if (j.contains("random_paste")) layout.random_paste = j.at("random_paste").get<bool>();
    layout.validate();
    return layout;
}

inline detail::json layout_to_json(const compositor::LayoutSpec& layout) {
    return {{"band_height_fraction", layout.band_height_fraction},
            {"font_px_max", layout.font_px_max},
            {"margin_px", layout.margin_px},
            {"text_color", {layout.text_color.r, layout.text_color.g, layout.text_color.b}},
            {"band_color", {layout.band_color.r, layout.band_color.g, layout.band_color.b}},
            {"class_band", compositor::to_string(layout.class_band)},
            {"description_band", compositor::to_string(layout.description_band)},
            {"random_paste", layout.random_paste}};
}

} // namespace cfgdetail

inline RunConfig run_config_from_json(detail::json doc, const std::filesystem::path& base_dir) {
    namespace fs = std::filesystem;
    if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
    auto resolve = [&](const std::string& p) -> fs::path {
        fs::path path(p);
        return path.is_absolute() ? path : (base_dir / path).lexically_normal();
    };

    RunConfig c;
    try {
        c.run_id = doc.value("run_id", c.run_id);
        c.master_seed = doc.value("master_seed", std::uint64_t{0});
        for (const auto& d : doc.value("datasets", detail::json::array()))
            c.datasets.push_back(resolve(d.get<std::string>()));
        for (const auto& g : doc.value("generators", detail::json::array()))
            c.generators.push_back(attacks::generator_from_string(g.get<std::string>()));
        if (doc.contains("attacker_model"))
            c.attacker_model = gateway::ModelClientConfig::from_json(doc.at("attacker_model"));
        for (const auto& m : doc.value("evaluated_models", detail::json::array()))
            c.evaluated_models.push_back(gateway::ModelClientConfig::from_json(m));
        if (doc.contains("embedding_model"))
            c.embedding_model = gateway::ModelClientConfig::from_json(doc.at("embedding_model"));
        if (doc.contains("layout")) c.layout = cfgdetail::layout_from_json(doc.at("layout"));
        if (doc.contains("prompt_variants")) {
            c.prompt_variants.clear();
            for (const auto& v : doc.at("prompt_variants"))
                c.prompt_variants.push_back(
                    evaluator::prompt_variant_from_string(v.get<std::string>()));
        }
        if (doc.contains("description_modes")) {
            c.description_modes.clear();
            for (const auto& m : doc.at("description_modes"))
                c.description_modes.push_back(
                    attacks::description_mode_from_string(m.get<std::string>()));
        }
        c.parallelism = doc.value("parallelism", 8);
        if (doc.contains("cache_dir")) c.cache_dir = resolve(doc.at("cache_dir").get<std::string>());
        if (doc.contains("out_dir")) c.out_dir = resolve(doc.at("out_dir").get<std::string>());
        if (doc.contains("sample_cap") && !doc.at("sample_cap").is_null())
            c.sample_cap = doc.at("sample_cap").get<int>();
        c.retry_budget = doc.value("retry_budget", 3);
        c.write_images = doc.value("write_images", false);
        c.per_condition_shuffle = doc.value("per_condition_shuffle", false);
        c.no_text_original_geometry = doc.value("no_text_original_geometry", false);
        c.containment_grading = doc.value("containment_grading", false);
        c.ve_image_mode = doc.value("ve_image_mode", false);
        if (doc.contains("templates_file") && !doc.at("templates_file").is_null())
            c.templates_file = resolve(doc.at("templates_file").get<std::string>());
    } catch (const detail::json::exception& e) {
        throw ConfigError(std::string("run config schema error: ") + e.what());
    }

    if (c.run_id.empty()) throw ConfigError("run_id must not be empty");
    if (c.datasets.empty()) throw ConfigError("config lists no datasets");
    if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (c.retry_budget < 1) throw ConfigError("retry_budget must be >= 1");
    if (c.templates_file) c.templates = prompts::load_templates(*c.templates_file);
    for (const auto& m : c.evaluated_models)
        if (m.temperature != 0.0)
            throw ConfigError("evaluated model '" + m.model_name +
                              "': temperature must be 0 (determinism contract)");
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    auto doc = detail::read_json_file(path);
    return run_config_from_json(std::move(doc),
                                std::filesystem::absolute(path).parent_path());
}

/// Everything needed to reproduce artifacts byte-for-byte on this machine.
inline detail::json run_metadata(const RunConfig& c) {
    auto hashes = prompts::hashes_of(c.templates);
    detail::json gens = detail::json::array();
    for (auto g : c.generators) gens.push_back(attacks::to_string(g));
    detail::json variants = detail::json::array();
    for (auto v : c.prompt_variants) variants.push_back(evaluator::to_string(v));
    detail::json modes = detail::json::array();
    for (auto m : c.description_modes) modes.push_back(attacks::to_string(m));
    detail::json models = detail::json::array();
    for (const auto& m : c.evaluated_models) models.push_back(m.to_json());

    detail::json meta{
        {"run_id", c.run_id},
        {"master_seed", c.master_seed},
        {"generators", gens},
        {"prompt_variants", variants},
        {"description_modes", modes},
        {"evaluated_models", models},
        {"layout", cfgdetail::layout_to_json(c.layout)},
        {"font", {{"id", compositor::font_id()}, {"hash", compositor::font_hash()}}},
        {"template_hashes",
         {{"class_query", hashes.class_query},
          {"desc_query", hashes.desc_query},
          {"question", hashes.question},
          {"ignore_text_prefix", hashes.ignore_text_prefix},
          {"embed_template", hashes.embed_template}}},
        {"sample_truncation_rule", "lexicographic_by_id"},
        {"per_condition_shuffle", c.per_condition_shuffle},
        {"no_text_original_geometry", c.no_text_original_geometry},
        {"containment_grading", c.containment_grading},
        {"ve_image_mode", c.ve_image_mode},
        {"retry_budget", c.retry_budget},
    };
    if (c.attacker_model) meta["attacker_model"] = c.attacker_model->to_json();
    if (c.embedding_model) meta["embedding_model"] = c.embedding_model->to_json();
    if (c.sample_cap) meta["sample_cap"] = *c.sample_cap;
    return meta;
}

} // namespace typobench::config
