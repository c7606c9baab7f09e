// The benchmark protocol: per sample build one shuffled choice set shared
// by every condition, compose (or reuse) the attacked image, query the
// model, parse the answer, grade. Records stream out in plan order so runs
// are resumable and byte-reproducible.

#pragma once

#include "typobench/attacks.hpp"
#include "typobench/compositor.hpp"
#include "typobench/corpus.hpp"
#include "typobench/gateway.hpp"
#include "typobench/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace typobench::evaluator {

enum class PromptVariant { standard, ignore_text };

inline std::string to_string(PromptVariant v) {
    return v == PromptVariant::standard ? "standard" : "ignore_text";
}

inline PromptVariant prompt_variant_from_string(const std::string& s) {
    if (s == "standard") return PromptVariant::standard;
    if (s == "ignore_text") return PromptVariant::ignore_text;
    throw ConfigError("unknown prompt variant '" + s + "'");
}

// ---------------------------------------------------------------------------
// choice sets

struct ChoiceSet {
    std::vector<std::string> options; // post-shuffle display forms
    int correct_index = 0;            // 1-based position of the ground truth
    std::uint64_t permutation_seed = 0;
};

/// Options are the label plus every generator's deceiving class, deduplicated
/// case-folded, shuffled by a stream keyed on (run seed, sample id).
inline ChoiceSet build_choice_set(const std::string& label,
                                  const std::vector<attacks::AttackInstance>& sample_attacks,
                                  std::uint64_t master_seed,
                                  const std::string& shuffle_key) {
    if (sample_attacks.empty())
        throw ValidationError("build_choice_set: need at least one attack");

    std::vector<std::string> options{label};
    std::vector<std::string> keys{detail::class_key(label)};
    for (const auto& a : sample_attacks) {
        std::string key = detail::class_key(a.deceiving_class);
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            keys.push_back(key);
            options.push_back(detail::collapse_ws(a.deceiving_class));
        }
    }
    if (options.size() < 2)
        throw ValidationError("build_choice_set: every attack collapsed onto the label");
    if (options.size() > 26)
        throw ValidationError("build_choice_set: more than 26 distinct options");

    ChoiceSet cs;
    cs.permutation_seed = detail::derive_seed(master_seed, "choice_shuffle", shuffle_key);
    detail::SplitMix64 rng(cs.permutation_seed);
    detail::shuffle(options, rng);
    auto label_key = detail::class_key(label);
    for (std::size_t i = 0; i < options.size(); ++i)
        if (detail::class_key(options[i]) == label_key)
            cs.correct_index = static_cast<int>(i) + 1;
    cs.options = std::move(options);
    return cs;
}

// ---------------------------------------------------------------------------
// question formatting and answer parsing

inline std::string format_question(const std::string& subject_noun, const ChoiceSet& choices,
                                   PromptVariant variant, const prompts::Templates& templates) {
    std::string q = prompts::substitute(
        templates.question,
        {{"subject_noun", subject_noun},
         {"options", prompts::numbered_options(choices.options)},
         {"numbers", prompts::numbered_connective(choices.options.size())}});
    if (variant == PromptVariant::ignore_text) return templates.ignore_text_prefix + "\n" + q;
    return q;
}

/// Precedence: first parenthesized index in range, then first standalone
/// integer token in range, then a unique case-fold hit of one option's text.
/// Absence signals an unparseable response (graded incorrect upstream).
inline std::optional<int> parse_answer(const std::string& response, int n_options,
                                       const std::vector<std::string>& options = {}) {
    if (n_options < 2) throw ValidationError("parse_answer: need at least 2 options");

    auto digits_at = [&](std::size_t i, std::size_t& end) -> std::optional<int> {
        std::size_t j = i;
        while (j < response.size() && std::isdigit(static_cast<unsigned char>(response[j]))) ++j;
        if (j == i || j - i > 2) return std::nullopt;
        end = j;
        return std::stoi(response.substr(i, j - i));
    };

    for (std::size_t i = 0; i < response.size(); ++i) {
        if (response[i] != '(') continue;
        std::size_t end = 0;
        auto v = digits_at(i + 1, end);
        if (v && end < response.size() && response[end] == ')' && *v >= 1 && *v <= n_options)
            return *v;
    }

    for (std::size_t i = 0; i < response.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(response[i]))) continue;
        bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(response[i - 1]));
        std::size_t end = 0;
        auto v = digits_at(i, end);
        if (!v) { // run too long; skip past it
            while (i < response.size() && std::isdigit(static_cast<unsigned char>(response[i]))) ++i;
            continue;
        }
        bool right_ok = end >= response.size() ||
                        !std::isalnum(static_cast<unsigned char>(response[end]));
        if (left_ok && right_ok && *v >= 1 && *v <= n_options) return *v;
        i = end - 1;
    }

    if (!options.empty()) {
        std::string folded = detail::casefold(detail::collapse_ws(response));
        int hits = 0;
        int hit_index = 0;
        for (std::size_t i = 0; i < options.size(); ++i) {
            if (folded.find(detail::class_key(options[i])) != std::string::npos) {
                ++hits;
                hit_index = static_cast<int>(i) + 1;
            }
        }
        if (hits == 1) return hit_index;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// run plan

struct PlanItem {
    std::string model_name;
    std::string dataset;
    std::string sample_id;
    std::optional<attacks::GeneratorId> generator; // nullopt = no_text baseline
    PromptVariant variant = PromptVariant::standard;
    std::optional<attacks::DescriptionMode> desc_mode; // descriptive conditions only

    std::string condition() const {
        return generator ? attacks::to_string(*generator) : "no_text";
    }

    /// Directory name for composed images; encodes the description mode.
    std::string attack_id() const {
        std::string id = condition();
        if (desc_mode && *desc_mode != attacks::DescriptionMode::own)
            id += "__" + attacks::to_string(*desc_mode);
        return id;
    }

    std::string key() const {
        return model_name + "|" + dataset + "|" + sample_id + "|" + condition() + "|" +
               to_string(variant) + "|" + (desc_mode ? attacks::to_string(*desc_mode) : "-");
    }
};

struct EvalSettings {
    std::string run_id = "run";
    std::uint64_t master_seed = 0;
    compositor::LayoutSpec layout;
    std::vector<attacks::GeneratorId> generators;
    std::vector<PromptVariant> prompt_variants = {PromptVariant::standard};
    std::vector<attacks::DescriptionMode> description_modes = {attacks::DescriptionMode::own};
    bool per_condition_shuffle = false; // default: one permutation per sample
    bool no_text_original_geometry = false;
    // compatibility mode: grade by raw substring containment of "(k)" as in
    // the original protocol, instead of the parsed index
    bool containment_grading = false;
    bool write_images = false;
    std::filesystem::path images_dir; // out/<run_id>, used when write_images
    prompts::Templates templates;
};

/// Items for one (model, dataset), totally ordered by
/// (sample_id, condition, variant, description mode).
inline std::vector<PlanItem> build_plan(const std::string& model_name,
                                        const corpus::DatasetManifest& manifest,
                                        const EvalSettings& settings) {
    std::vector<PlanItem> plan;
    std::vector<std::optional<attacks::GeneratorId>> conditions{std::nullopt};
    for (auto g : attacks::kAllGenerators)
        if (std::find(settings.generators.begin(), settings.generators.end(), g) !=
            settings.generators.end())
            conditions.push_back(g);

    for (const auto& sample : manifest.samples) {
        for (const auto& cond : conditions) {
            for (auto variant : settings.prompt_variants) {
                PlanItem item;
                item.model_name = model_name;
                item.dataset = manifest.name;
                item.sample_id = sample.id;
                item.generator = cond;
                item.variant = variant;
                if (cond && attacks::is_descriptive(*cond)) {
                    for (auto mode : settings.description_modes) {
                        item.desc_mode = mode;
                        plan.push_back(item);
                    }
                } else {
                    item.desc_mode.reset();
                    plan.push_back(item);
                }
            }
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// records

struct ResultRecord {
    std::string run_id;
    std::string model_name;
    std::string dataset;
    std::string sample_id;
    std::string condition;
    std::string prompt_variant;
    std::optional<std::string> description_mode;
    std::string raw_response;
    std::optional<int> parsed_index;
    bool correct = false;
    bool from_cache = false;
    int latency_ms = 0;
    bool skipped = false;      // transport failure after retries
    std::string error;         // set when skipped

    detail::json to_json() const {
        detail::json j{{"run_id", run_id},
                       {"model_name", model_name},
                       {"dataset", dataset},
                       {"sample_id", sample_id},
                       {"condition", condition},
                       {"prompt_variant", prompt_variant},
                       {"raw_response", raw_response},
                       {"correct", correct},
                       {"from_cache", from_cache},
                       {"latency_ms", latency_ms}};
        if (description_mode) j["description_mode"] = *description_mode;
        if (parsed_index) j["parsed_index"] = *parsed_index;
        if (skipped) {
            j["skipped"] = true;
            j["error"] = error;
        }
        return j;
    }

    static ResultRecord from_json(const detail::json& j) {
        ResultRecord r;
        r.run_id = j.value("run_id", std::string{});
        r.model_name = j.at("model_name").get<std::string>();
        r.dataset = j.at("dataset").get<std::string>();
        r.sample_id = j.at("sample_id").get<std::string>();
        r.condition = j.at("condition").get<std::string>();
        r.prompt_variant = j.value("prompt_variant", std::string{"standard"});
        if (j.contains("description_mode"))
            r.description_mode = j.at("description_mode").get<std::string>();
        r.raw_response = j.value("raw_response", std::string{});
        if (j.contains("parsed_index")) r.parsed_index = j.at("parsed_index").get<int>();
        r.correct = j.value("correct", false);
        r.from_cache = j.value("from_cache", false);
        r.latency_ms = j.value("latency_ms", 0);
        r.skipped = j.value("skipped", false);
        r.error = j.value("error", std::string{});
        return r;
    }
};

// ---------------------------------------------------------------------------
// per-(model, dataset) evaluation engine

struct EvalItem {
    PlanItem plan;
    ChoiceSet choices;
    std::vector<std::uint8_t> image_png;
    std::vector<std::string> rendered_texts; // as drawn, empty for no_text
    std::string question;
};

class DatasetEvaluator {
public:
    DatasetEvaluator(const corpus::DatasetManifest& manifest,
                     std::map<attacks::GeneratorId, std::vector<attacks::AttackInstance>> attack_sets,
                     EvalSettings settings)
        : manifest_(manifest), settings_(std::move(settings)) {
        for (auto& [gen, list] : attack_sets) {
            auto& by_id = attacks_by_sample_[gen];
            for (auto& a : list) by_id.emplace(a.sample_id, std::move(a));
        }
        for (const auto& sample : manifest_.samples) samples_by_id_.emplace(sample.id, &sample);
        validate_coverage();
    }

    const EvalSettings& settings() const { return settings_; }

    /// Choice set shared by every condition of the sample (per-sample mode).
    const ChoiceSet& choices_for(const std::string& sample_id, const std::string& condition) {
        std::string key = settings_.per_condition_shuffle ? sample_id + "\x1f" + condition
                                                          : sample_id;
        std::lock_guard lock(choice_mutex_);
        auto it = choice_cache_.find(key);
        if (it != choice_cache_.end()) return it->second;

        const corpus::Sample& sample = sample_ref(sample_id);
        std::vector<attacks::AttackInstance> sample_attacks;
        for (auto g : attacks::kAllGenerators) {
            auto set_it = attacks_by_sample_.find(g);
            if (set_it == attacks_by_sample_.end()) continue;
            auto a_it = set_it->second.find(sample_id);
            if (a_it == set_it->second.end())
                throw ValidationError("attack set '" + attacks::to_string(g) +
                                      "' misses sample '" + sample_id + "'");
            sample_attacks.push_back(a_it->second);
        }
        return choice_cache_
            .emplace(key, build_choice_set(sample.label, sample_attacks, settings_.master_seed, key))
            .first->second;
    }

    /// Compose the image, build the prompt, and assemble the item.
    EvalItem prepare(const PlanItem& plan) {
        EvalItem item;
        item.plan = plan;
        item.choices = choices_for(plan.sample_id, plan.condition());
        item.question = format_question(manifest_.subject_noun, item.choices, plan.variant,
                                        settings_.templates);
        auto composed = composed_for(plan);
        item.image_png = composed.png;
        item.rendered_texts = composed.rendered_texts;
        return item;
    }

    /// Query, parse, grade. Transport failures yield a skipped record; the
    /// run always continues.
    ResultRecord evaluate(gateway::ModelClient& client, const PlanItem& plan) {
        ResultRecord r;
        r.run_id = settings_.run_id;
        r.model_name = plan.model_name;
        r.dataset = plan.dataset;
        r.sample_id = plan.sample_id;
        r.condition = plan.condition();
        r.prompt_variant = to_string(plan.variant);
        if (plan.desc_mode) r.description_mode = attacks::to_string(*plan.desc_mode);

        EvalItem item;
        try {
            item = prepare(plan);
        } catch (const std::exception& e) {
            r.skipped = true;
            r.error = std::string("prepare: ") + e.what();
            return r;
        }

        gateway::Sidecar sidecar;
        sidecar.kind = "mcq";
        sidecar.ground_truth = sample_ref(plan.sample_id).label;
        sidecar.rendered_texts = item.rendered_texts;
        sidecar.option_list = item.choices.options;

        gateway::ChatMessage msg{"user", item.question, item.image_png};
        gateway::CallMeta meta;
        try {
            r.raw_response = client.chat({msg}, sidecar, &meta);
        } catch (const TransportError& e) {
            r.skipped = true;
            r.error = e.what();
            return r;
        }
        r.from_cache = meta.from_cache;
        r.latency_ms = meta.latency_ms;
        r.parsed_index = parse_answer(r.raw_response, static_cast<int>(item.choices.options.size()),
                                      item.choices.options);
        if (settings_.containment_grading) {
            std::string token = "(" + std::to_string(item.choices.correct_index) + ")";
            r.correct = r.raw_response.find(token) != std::string::npos;
        } else {
            r.correct = r.parsed_index && *r.parsed_index == item.choices.correct_index;
        }
        return r;
    }

private:
    struct ComposedEntry {
        std::vector<std::uint8_t> png;
        std::vector<std::string> rendered_texts;
    };

    const corpus::Sample& sample_ref(const std::string& sample_id) const {
        auto it = samples_by_id_.find(sample_id);
        if (it == samples_by_id_.end())
            throw ValidationError("unknown sample id '" + sample_id + "'");
        return *it->second;
    }

    void validate_coverage() const {
        for (auto g : settings_.generators) {
            auto it = attacks_by_sample_.find(g);
            if (it == attacks_by_sample_.end())
                throw ConfigError("no attack set loaded for generator '" + attacks::to_string(g) +
                                  "'");
            for (const auto& sample : manifest_.samples)
                if (!it->second.count(sample.id))
                    throw ConfigError("attack set '" + attacks::to_string(g) +
                                      "' misses sample '" + sample.id + "'");
        }
    }

    const attacks::AttackInstance& attack_for(attacks::GeneratorId gen,
                                              const std::string& sample_id) const {
        return attacks_by_sample_.at(gen).at(sample_id);
    }

    /// Descriptions available for random_other swaps, per generator.
    const std::vector<attacks::AttackInstance>& pool_for(attacks::GeneratorId gen) {
        std::lock_guard lock(pool_mutex_);
        auto it = pools_.find(gen);
        if (it != pools_.end()) return it->second;
        std::vector<attacks::AttackInstance> pool;
        for (const auto& [sid, a] : attacks_by_sample_.at(gen)) pool.push_back(a);
        return pools_.emplace(gen, std::move(pool)).first->second;
    }

    ComposedEntry composed_for(const PlanItem& plan) {
        std::string cache_key = plan.sample_id + "|" + plan.attack_id();
        {
            std::lock_guard lock(image_mutex_);
            auto it = image_cache_.find(cache_key);
            if (it != image_cache_.end()) return it->second;
        }

        const corpus::Sample& sample = sample_ref(plan.sample_id);
        img::Raster source = img::load_image(sample.image_path);
        if (source.width() < 64 || source.height() < 64)
            throw ValidationError("image under 64px: " + sample.image_path.string());

        ComposedEntry entry;
        if (!plan.generator) {
            if (settings_.no_text_original_geometry) {
                entry.png = img::encode_png(source);
            } else {
                auto padded = compositor::pad_image(source, settings_.layout);
                entry.png = img::encode_png(padded.pixels);
            }
        } else {
            attacks::AttackInstance attack = attack_for(*plan.generator, plan.sample_id);
            if (plan.desc_mode && attacks::is_descriptive(*plan.generator))
                attack = attacks::swap_description(attack, *plan.desc_mode,
                                                   pool_for(*plan.generator),
                                                   settings_.master_seed);
            auto composed =
                compositor::render_attack(compositor::pad_image(source, settings_.layout), attack);
            entry.png = img::encode_png(composed.pixels);
            for (const auto& t : composed.rendered_texts)
                if (!t.text.empty()) entry.rendered_texts.push_back(t.text);
        }
        if (settings_.write_images && !settings_.images_dir.empty()) write_composed(plan, entry.png);

        std::lock_guard lock(image_mutex_);
        if (image_cache_.size() >= kImageCacheCap) {
            image_cache_.erase(image_cache_order_.front());
            image_cache_order_.pop_front();
        }
        image_cache_order_.push_back(cache_key);
        return image_cache_.emplace(cache_key, std::move(entry)).first->second;
    }

    void write_composed(const PlanItem& plan, const std::vector<std::uint8_t>& png) {
        namespace fs = std::filesystem;
        fs::path dir = settings_.images_dir / plan.attack_id();
        fs::create_directories(dir);
        std::string name = plan.sample_id;
        for (char& c : name)
            if (c == '/' || c == '\\' || c == ':') c = '_';
        fs::path file = dir / (name + ".png");
        if (fs::exists(file)) return; // content-addressed: same inputs, same bytes
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    }

    static constexpr std::size_t kImageCacheCap = 128;

    const corpus::DatasetManifest& manifest_;
    EvalSettings settings_;
    std::map<attacks::GeneratorId, std::map<std::string, attacks::AttackInstance>> attacks_by_sample_;
    std::map<std::string, const corpus::Sample*> samples_by_id_;

    std::mutex choice_mutex_;
    std::map<std::string, ChoiceSet> choice_cache_;
    std::mutex pool_mutex_;
    std::map<attacks::GeneratorId, std::vector<attacks::AttackInstance>> pools_;
    std::mutex image_mutex_;
    std::map<std::string, ComposedEntry> image_cache_;
    std::list<std::string> image_cache_order_;
};

} // namespace typobench::evaluator
