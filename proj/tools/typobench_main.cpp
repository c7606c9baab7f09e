// typobench: typographic-attack benchmark pipeline for vision-language
// models. Subcommands: ingest, generate, compose, evaluate, report,
// mock-serve. Exit codes: 0 ok, 2 config error, 3 partial failure,
// 4 transport-fatal.

#include "typobench/typobench.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <csignal>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace {

std::atomic<bool> g_stop{false};

void handle_sigint(int) { g_stop.store(true); }

struct CommonOverrides {
    std::optional<std::string> run_id;
    std::optional<std::uint64_t> master_seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> cache_dir;
    std::optional<int> parallelism;
    std::optional<int> sample_cap;
    std::vector<std::string> generators;
};

void add_override_flags(CLI::App* cmd, CommonOverrides& o) {
    cmd->add_option("--run-id", o.run_id, "Override run_id");
    cmd->add_option("--master-seed", o.master_seed, "Override master_seed");
    cmd->add_option("--out-dir", o.out_dir, "Override out_dir");
    cmd->add_option("--cache-dir", o.cache_dir, "Override cache_dir");
    cmd->add_option("--parallelism", o.parallelism, "Override worker count");
    cmd->add_option("--sample-cap", o.sample_cap, "Override per-dataset sample cap");
    cmd->add_option("--generators", o.generators, "Override generator list")->delimiter(',');
}

typobench::config::RunConfig load_config(const std::string& path, const CommonOverrides& o) {
    namespace fs = std::filesystem;
    auto cfg = typobench::config::load_run_config(path);
    if (o.run_id) cfg.run_id = *o.run_id;
    if (o.master_seed) cfg.master_seed = *o.master_seed;
    if (o.out_dir) cfg.out_dir = fs::absolute(*o.out_dir);
    if (o.cache_dir) cfg.cache_dir = fs::absolute(*o.cache_dir);
    if (o.parallelism) cfg.parallelism = *o.parallelism;
    if (o.sample_cap) cfg.sample_cap = *o.sample_cap;
    if (!o.generators.empty()) {
        cfg.generators.clear();
        for (const auto& g : o.generators)
            cfg.generators.push_back(typobench::attacks::generator_from_string(g));
    }
    return cfg;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const typobench::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const typobench::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const typobench::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_sigint);

    CLI::App app{"Typographic-attack benchmark pipeline for vision-language models"};
    app.require_subcommand(1);

    // ingest ----------------------------------------------------------------
    auto* ingest = app.add_subcommand("ingest", "Validate a dataset manifest or build one");
    std::string ingest_manifest, ingest_from_dir, ingest_out, ingest_name, ingest_noun;
    int ingest_cap = typobench::corpus::kDefaultSampleCap;
    ingest->add_option("--manifest", ingest_manifest, "Manifest JSON to validate");
    ingest->add_option("--from-dir", ingest_from_dir,
                       "Build a manifest from a root/<class>/<image> tree");
    ingest->add_option("--name", ingest_name, "Dataset name (with --from-dir)");
    ingest->add_option("--subject-noun", ingest_noun, "Question noun, e.g. 'pet'");
    ingest->add_option("--sample-cap", ingest_cap, "Sample cap");
    ingest->add_option("--out", ingest_out, "Write the normalized manifest here");

    // generate ---------------------------------------------------------------
    auto* generate = app.add_subcommand("generate", "Generate attack sets per dataset");
    std::string generate_config;
    CommonOverrides generate_overrides;
    generate->add_option("--config", generate_config, "Run config JSON")->required();
    add_override_flags(generate, generate_overrides);

    // compose ----------------------------------------------------------------
    auto* compose = app.add_subcommand("compose", "Write attacked images only (debug)");
    std::string compose_config;
    CommonOverrides compose_overrides;
    compose->add_option("--config", compose_config, "Run config JSON")->required();
    add_override_flags(compose, compose_overrides);

    // evaluate ---------------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "Run the benchmark protocol");
    std::string evaluate_config;
    CommonOverrides evaluate_overrides;
    std::optional<std::size_t> max_items;
    evaluate->add_option("--config", evaluate_config, "Run config JSON")->required();
    evaluate->add_option("--max-items", max_items,
                         "Process at most N new items, then stop (resumable)");
    add_override_flags(evaluate, evaluate_overrides);

    // report -----------------------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "Aggregate results into report files");
    std::string report_run_dir;
    std::vector<std::string> report_formats{"md", "csv"};
    report_cmd->add_option("--run-dir", report_run_dir, "out/<run_id> directory")->required();
    report_cmd->add_option("--format", report_formats, "md and/or csv")->delimiter(',');

    // mock-serve ---------------------------------------------------------------
    auto* mock_serve = app.add_subcommand("mock-serve", "Local wire-compatible mock endpoint");
    std::string serve_policy = "truthful", serve_host = "127.0.0.1";
    int serve_port = 8787;
    std::uint64_t serve_seed = 0;
    std::size_t serve_dim = 16;
    mock_serve->add_option("--policy", serve_policy,
                           "truthful | text_follower | fixed_choice | uniform_random");
    mock_serve->add_option("--host", serve_host, "Bind host");
    mock_serve->add_option("--port", serve_port, "Bind port");
    mock_serve->add_option("--seed", serve_seed, "Policy seed");
    mock_serve->add_option("--dim", serve_dim, "Embedding dimension");

    CLI11_PARSE(app, argc, argv);

    if (ingest->parsed()) {
        return guarded([&]() -> int {
            using namespace typobench;
            corpus::DatasetManifest manifest;
            if (!ingest_from_dir.empty()) {
                if (ingest_name.empty())
                    throw ConfigError("--from-dir needs --name (and usually --subject-noun)");
                manifest = corpus::manifest_from_directory(ingest_from_dir, ingest_name,
                                                           ingest_noun, ingest_cap);
            } else if (!ingest_manifest.empty()) {
                manifest = corpus::load_manifest(ingest_manifest);
            } else {
                throw ConfigError("ingest needs --manifest or --from-dir");
            }
            std::cout << "dataset: " << manifest.name << "\nsubject_noun: "
                      << manifest.subject_noun << "\nclasses: " << manifest.classes.size()
                      << "\nsamples: " << manifest.samples.size() << " (listed "
                      << manifest.total_samples_listed << ", cap " << manifest.sample_cap
                      << ")\n";
            if (!ingest_out.empty()) {
                corpus::save_manifest(manifest, ingest_out);
                std::cout << "wrote " << ingest_out << "\n";
            }
            return 0;
        });
    }

    if (generate->parsed()) {
        return guarded([&]() -> int {
            auto cfg = load_config(generate_config, generate_overrides);
            auto outcome = typobench::cli::run_generate(cfg, &g_stop);
            std::cout << "attacks written: " << outcome.attacks_written
                      << ", samples skipped: " << outcome.samples_skipped << "\n";
            if (outcome.stopped) std::cout << "stopped early (signal); rerun to continue\n";
            return outcome.samples_skipped > 0 || outcome.stopped ? 3 : 0;
        });
    }

    if (compose->parsed()) {
        return guarded([&]() -> int {
            auto cfg = load_config(compose_config, compose_overrides);
            auto outcome = typobench::cli::run_compose(cfg);
            std::cout << "images written: " << outcome.images_written << " under "
                      << cfg.run_dir().string() << "\n";
            return 0;
        });
    }

    if (evaluate->parsed()) {
        return guarded([&]() -> int {
            auto cfg = load_config(evaluate_config, evaluate_overrides);
            auto outcome = typobench::cli::run_evaluate(cfg, &g_stop, max_items);
            std::cout << "planned: " << outcome.planned << ", resumed from: "
                      << outcome.resumed_from << ", emitted: " << outcome.emitted
                      << ", skipped: " << outcome.skipped_records << "\n"
                      << "results: " << cfg.results_path().string() << "\n";
            if (!outcome.complete)
                std::cout << "run incomplete; rerun the same command to resume\n";
            return outcome.skipped_records > 0 || !outcome.complete ? 3 : 0;
        });
    }

    if (report_cmd->parsed()) {
        return guarded([&]() -> int {
            bool md = false, csv = false;
            for (const auto& f : report_formats) {
                if (f == "md") md = true;
                else if (f == "csv") csv = true;
                else throw typobench::ConfigError("unknown report format '" + f + "'");
            }
            auto outcome = typobench::cli::run_report(report_run_dir, md, csv);
            for (const auto& p : outcome.files) std::cout << "wrote " << p.string() << "\n";
            return 0;
        });
    }

    if (mock_serve->parsed()) {
        return guarded([&]() -> int {
            using namespace typobench::gateway;
            MockPolicy policy{MockPolicy::kind_from_string(serve_policy), serve_seed};
            MockServer server(policy, serve_dim);
            std::cout << "mock endpoint (" << serve_policy << ") on http://" << serve_host << ":"
                      << serve_port << "\n";
            std::thread watcher([&server]() {
                while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
                server.stop();
            });
            bool ok = server.listen(serve_host, serve_port);
            bool was_stopped = g_stop.load();
            g_stop.store(true);
            watcher.join();
            if (!ok && !was_stopped)
                throw typobench::TransportError("mock server failed to listen");
            return 0;
        });
    }

    return 0;
}
