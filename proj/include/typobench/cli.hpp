// Pipeline commands behind the CLI subcommands. These are plain functions
// so integration tests drive the exact operator surface.

#pragma once

#include "typobench/attacks.hpp"
#include "typobench/config.hpp"
#include "typobench/corpus.hpp"
#include "typobench/detail/parallel.hpp"
#include "typobench/evaluator.hpp"
#include "typobench/gateway_http.hpp"
#include "typobench/report.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace typobench::cli {

// ---------------------------------------------------------------------------
// generate

struct GenerateOutcome {
    std::size_t attacks_written = 0;
    std::size_t samples_skipped = 0;
    std::uint64_t transport_calls = 0; // wire calls; cache hits never count
    bool stopped = false;
};

namespace clidetail {

inline std::vector<attacks::GeneratorId> requested_in_order(const config::RunConfig& cfg) {
    std::vector<attacks::GeneratorId> out;
    for (auto g : attacks::kAllGenerators)
        if (cfg.wants(g)) out.push_back(g);
    return out;
}

inline std::optional<std::vector<std::uint8_t>> load_png_bytes(const corpus::Sample& sample) {
    img::Raster source = img::load_image(sample.image_path);
    if (source.width() < 64 || source.height() < 64)
        throw ValidationError("image under 64px: " + sample.image_path.string());
    return img::encode_png(source);
}

} // namespace clidetail

inline GenerateOutcome run_generate(const config::RunConfig& cfg,
                                    const std::atomic<bool>* stop = nullptr,
                                    gateway::Sleeper sleeper = gateway::default_sleeper,
                                    std::ostream& log = std::cerr) {
    auto requested = clidetail::requested_in_order(cfg);
    if (requested.empty()) throw ConfigError("generate: no generators requested");

    auto cache = std::make_shared<gateway::CacheStore>(cfg.cache_path());
    std::unique_ptr<gateway::ModelClient> attacker;
    std::unique_ptr<gateway::ModelClient> embedder;
    for (auto g : requested) {
        if (attacks::needs_chat_model(g) && !attacker) {
            if (!cfg.attacker_model)
                throw ConfigError("generator '" + attacks::to_string(g) +
                                  "' needs attacker_model in the config");
            attacker = std::make_unique<gateway::ModelClient>(
                gateway::make_client(*cfg.attacker_model, cache, sleeper));
        }
        if (g == attacks::GeneratorId::class_ve && !embedder) {
            if (!cfg.embedding_model)
                throw ConfigError("generator 'class_ve' needs embedding_model in the config");
            embedder = std::make_unique<gateway::ModelClient>(
                gateway::make_client(*cfg.embedding_model, cache, sleeper));
        }
    }

    GenerateOutcome outcome;
    for (const auto& manifest_path : cfg.datasets) {
        auto manifest = corpus::load_manifest(manifest_path, cfg.sample_cap);

        attacks::GenerationSettings settings;
        settings.master_seed = cfg.master_seed;
        settings.retry_budget = cfg.retry_budget;
        settings.templates = cfg.templates;
        settings.subject_noun = manifest.subject_noun;

        for (auto gen : requested) {
            if (stop && stop->load()) {
                outcome.stopped = true;
                return outcome;
            }

            std::optional<attacks::EmbeddingTable> table;
            if (gen == attacks::GeneratorId::class_ve)
                table = attacks::build_embedding_table(manifest.classes, *embedder, cfg.templates);

            const bool with_image = gen == attacks::GeneratorId::class_lvlm ||
                                    gen == attacks::GeneratorId::desc_lvlm ||
                                    (gen == attacks::GeneratorId::class_ve && cfg.ve_image_mode);

            using ItemResult = std::optional<attacks::AttackInstance>;
            std::vector<attacks::AttackInstance> generated;
            auto work = [&](std::size_t i) -> ItemResult {
                const corpus::Sample& sample = manifest.samples[i];
                try {
                    switch (gen) {
                        case attacks::GeneratorId::random_class:
                            return attacks::random_class_attack(sample, manifest.classes,
                                                                cfg.master_seed);
                        case attacks::GeneratorId::class_ve: {
                            if (cfg.ve_image_mode) {
                                auto png = clidetail::load_png_bytes(sample);
                                std::string data_url =
                                    "data:image/png;base64," + detail::base64_encode(*png);
                                auto rows = embedder->embed({data_url});
                                return attacks::class_attack_via_embeddings(
                                    sample, manifest.classes, *table, &rows[0]);
                            }
                            return attacks::class_attack_via_embeddings(sample, manifest.classes,
                                                                        *table);
                        }
                        case attacks::GeneratorId::class_llm:
                        case attacks::GeneratorId::class_lvlm:
                            return attacks::class_attack_via_model(
                                sample, manifest.classes, *attacker, with_image, settings,
                                with_image ? clidetail::load_png_bytes(sample) : std::nullopt);
                        case attacks::GeneratorId::desc_llm:
                        case attacks::GeneratorId::desc_lvlm:
                            return attacks::descriptive_attack(
                                sample, manifest.classes, *attacker, with_image, settings,
                                with_image ? clidetail::load_png_bytes(sample) : std::nullopt);
                    }
                    throw ValidationError("unhandled generator");
                } catch (const TransportError& e) {
                    log << "[generate] skipping sample '" << sample.id << "' ("
                        << attacks::to_string(gen) << "): " << e.what() << "\n";
                    return std::nullopt;
                } catch (const ValidationError& e) {
                    log << "[generate] skipping sample '" << sample.id << "' ("
                        << attacks::to_string(gen) << "): " << e.what() << "\n";
                    return std::nullopt;
                }
            };
            std::size_t skipped_before = outcome.samples_skipped;
            detail::parallel_ordered<ItemResult>(
                manifest.samples.size(), cfg.parallelism, work,
                [&](std::size_t, ItemResult&& r) {
                    if (r)
                        generated.push_back(std::move(*r));
                    else
                        ++outcome.samples_skipped;
                },
                stop);

            attacks::save_attacks(cfg.attack_file(manifest.name, gen), generated);
            outcome.attacks_written += generated.size();
            if (outcome.samples_skipped > skipped_before)
                log << "[generate] " << manifest.name << "/" << attacks::to_string(gen) << ": "
                    << (outcome.samples_skipped - skipped_before) << " sample(s) skipped\n";
            if (stop && stop->load()) {
                outcome.stopped = true;
                break;
            }
        }
        if (outcome.stopped) break;
    }
    if (attacker) outcome.transport_calls += attacker->transport()->calls();
    if (embedder) outcome.transport_calls += embedder->transport()->calls();
    return outcome;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOutcome {
    std::size_t planned = 0;
    std::size_t resumed_from = 0; // records already present
    std::size_t emitted = 0;      // records appended this invocation
    std::size_t skipped_records = 0;
    std::uint64_t transport_calls = 0; // wire calls; cache hits never count
    bool complete = false;
    bool stopped = false;
};

inline EvaluateOutcome run_evaluate(const config::RunConfig& cfg,
                                    const std::atomic<bool>* stop = nullptr,
                                    std::optional<std::size_t> max_new_items = std::nullopt,
                                    gateway::Sleeper sleeper = gateway::default_sleeper) {
    namespace fs = std::filesystem;
    if (cfg.evaluated_models.empty()) throw ConfigError("evaluate: no evaluated_models in config");
    if (cfg.generators.empty()) throw ConfigError("evaluate: no generators requested");

    auto cache = std::make_shared<gateway::CacheStore>(cfg.cache_path());
    auto settings = cfg.eval_settings();

    // datasets + attack sets + one evaluator per dataset (shared across models)
    std::vector<std::unique_ptr<corpus::DatasetManifest>> manifests;
    std::map<std::string, std::unique_ptr<evaluator::DatasetEvaluator>> evaluators;
    for (const auto& path : cfg.datasets) {
        auto manifest = std::make_unique<corpus::DatasetManifest>(
            corpus::load_manifest(path, cfg.sample_cap));
        std::map<attacks::GeneratorId, std::vector<attacks::AttackInstance>> sets;
        for (auto gen : clidetail::requested_in_order(cfg)) {
            fs::path file = cfg.attack_file(manifest->name, gen);
            if (!fs::exists(file))
                throw ConfigError("missing attack file " + file.string() +
                                  "; run `typobench generate` for generator '" +
                                  attacks::to_string(gen) + "' first");
            sets[gen] = attacks::load_attacks(file);
        }
        auto& ref = *manifest;
        evaluators.emplace(ref.name, std::make_unique<evaluator::DatasetEvaluator>(
                                         ref, std::move(sets), settings));
        manifests.push_back(std::move(manifest));
    }

    // full plan: models outer (config order), then datasets (config order)
    std::vector<evaluator::PlanItem> plan;
    for (const auto& model : cfg.evaluated_models)
        for (const auto& manifest : manifests) {
            auto block = evaluator::build_plan(model.model_name, *manifest, settings);
            plan.insert(plan.end(), block.begin(), block.end());
        }

    EvaluateOutcome outcome;
    outcome.planned = plan.size();

    fs::create_directories(cfg.run_dir());
    detail::write_text_file(cfg.run_meta_path(), config::run_metadata(cfg).dump(2) + "\n");

    // resume: existing records must form a prefix of the plan
    std::size_t done = 0;
    if (fs::exists(cfg.results_path())) {
        auto existing = report::load_records(cfg.results_path());
        if (existing.size() > plan.size())
            throw ConfigError("results file has more records than the plan; wrong run config?");
        for (std::size_t i = 0; i < existing.size(); ++i) {
            const auto& r = existing[i];
            std::string key = r.model_name + "|" + r.dataset + "|" + r.sample_id + "|" +
                              r.condition + "|" + r.prompt_variant + "|" +
                              (r.description_mode ? *r.description_mode : "-");
            if (key != plan[i].key())
                throw ConfigError("results file diverges from the plan at record " +
                                  std::to_string(i) + " (" + key + " vs " + plan[i].key() +
                                  "); refusing to resume");
            if (r.skipped) ++outcome.skipped_records;
        }
        done = existing.size();
    }
    outcome.resumed_from = done;

    std::map<std::string, std::unique_ptr<gateway::ModelClient>> clients;
    for (const auto& m : cfg.evaluated_models)
        clients.emplace(m.model_name, std::make_unique<gateway::ModelClient>(
                                          gateway::make_client(m, cache, sleeper)));

    std::size_t todo = plan.size() - done;
    if (max_new_items) todo = std::min(todo, *max_new_items);

    std::ofstream out(cfg.results_path(), std::ios::app);
    if (!out) throw ConfigError("cannot open " + cfg.results_path().string());

    auto work = [&](std::size_t i) -> evaluator::ResultRecord {
        const auto& item = plan[done + i];
        return evaluators.at(item.dataset)->evaluate(*clients.at(item.model_name), item);
    };
    outcome.emitted = detail::parallel_ordered<evaluator::ResultRecord>(
        todo, cfg.parallelism, work,
        [&](std::size_t, evaluator::ResultRecord&& r) {
            if (r.skipped) ++outcome.skipped_records;
            out << r.to_json().dump() << "\n";
            out.flush();
        },
        stop);

    for (const auto& [name, client] : clients) outcome.transport_calls += client->transport()->calls();
    outcome.stopped = stop && stop->load();
    outcome.complete = done + outcome.emitted == plan.size();
    return outcome;
}

// ---------------------------------------------------------------------------
// compose (debug: write attacked images only)

struct ComposeOutcome {
    std::size_t images_written = 0;
};

inline ComposeOutcome run_compose(const config::RunConfig& cfg) {
    namespace fs = std::filesystem;
    ComposeOutcome outcome;
    for (const auto& path : cfg.datasets) {
        auto manifest = corpus::load_manifest(path, cfg.sample_cap);
        for (auto gen : clidetail::requested_in_order(cfg)) {
            fs::path file = cfg.attack_file(manifest.name, gen);
            if (!fs::exists(file))
                throw ConfigError("missing attack file " + file.string() +
                                  "; run `typobench generate` first");
            auto instances = attacks::load_attacks(file);
            std::map<std::string, const corpus::Sample*> by_id;
            for (const auto& s : manifest.samples) by_id[s.id] = &s;
            for (const auto& attack : instances) {
                auto it = by_id.find(attack.sample_id);
                if (it == by_id.end()) continue;
                img::Raster source = img::load_image(it->second->image_path);
                auto composed =
                    compositor::render_attack(compositor::pad_image(source, cfg.layout), attack);
                std::string name = attack.sample_id;
                for (char& c : name)
                    if (c == '/' || c == '\\' || c == ':') c = '_';
                img::save_png(composed.pixels,
                              cfg.run_dir() / attacks::to_string(gen) / (name + ".png"));
                ++outcome.images_written;
            }
        }
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// report

struct ReportOutcome {
    std::vector<std::filesystem::path> files;
};

inline ReportOutcome run_report(const std::filesystem::path& run_dir, bool write_md = true,
                                bool write_csv = true) {
    namespace fs = std::filesystem;
    fs::path results = run_dir / "results.jsonl";
    if (!fs::exists(results)) throw ConfigError("no results file at " + results.string());
    auto records = report::load_records(results);
    if (records.empty()) throw ConfigError("results file is empty: " + results.string());

    ReportOutcome outcome;
    if (write_md) {
        fs::path p = run_dir / "report.md";
        detail::write_text_file(p, report::render_markdown(records));
        outcome.files.push_back(p);
    }
    if (write_csv) {
        fs::path p = run_dir / "report.csv";
        detail::write_text_file(p, report::render_csv(records));
        outcome.files.push_back(p);
        p = run_dir / "ablation_descriptions.csv";
        detail::write_text_file(p, report::render_descriptions_csv(records));
        outcome.files.push_back(p);
        p = run_dir / "ablation_defense.csv";
        detail::write_text_file(p, report::render_defense_csv(records));
        outcome.files.push_back(p);
    }
    return outcome;
}

} // namespace typobench::cli
