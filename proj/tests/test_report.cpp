#include "typobench/report.hpp"

#include "support/fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace typobench;
using evaluator::ResultRecord;
using report::table_main;
using report::table_per_dataset;

namespace {

/// Records engineered so 100*correct/n hits the requested percentage
/// exactly (one decimal => n = 1000).
void inject(std::vector<ResultRecord>& records, const std::string& model,
            const std::string& dataset, const std::string& condition, double accuracy_pct,
            int n = 1000) {
    int correct = static_cast<int>(std::llround(accuracy_pct * n / 100.0));
    for (int i = 0; i < n; ++i) {
        ResultRecord r;
        r.run_id = "fixture";
        r.model_name = model;
        r.dataset = dataset;
        r.sample_id = "s" + std::to_string(i);
        r.condition = condition;
        r.prompt_variant = "standard";
        if (condition == "desc_llm" || condition == "desc_lvlm") r.description_mode = "own";
        r.parsed_index = 1;
        r.correct = i < correct;
        records.push_back(std::move(r));
    }
}

const std::vector<std::string> kConditions = {"no_text",   "random_class", "class_ve",
                                              "class_llm", "class_lvlm",   "desc_llm",
                                              "desc_lvlm"};

// published per-model accuracies (dataset-averaged main table)
const std::map<std::string, std::vector<double>> kPublishedMain = {
    {"GPT4-V", {72.7, 66.0, 38.9, 57.8, 50.9, 58.1, 31.8}},
    {"LLaVA 1.5", {50.8, 27.3, 18.3, 18.2, 13.2, 11.5, 9.9}},
    {"InstructBlip", {60.2, 26.8, 20.6, 23.0, 22.2, 13.9, 14.9}},
    {"MiniGPT4-2", {27.7, 25.6, 25.7, 24.6, 25.3, 23.7, 22.4}},
};
const std::vector<double> kPublishedAvg = {52.9, 36.4, 25.9, 30.9, 27.9, 26.8, 19.7};

// Aircraft per-dataset table and its Avg row
const std::map<std::string, std::vector<double>> kPublishedAircraft = {
    {"GPT4-V", {44.6, 37.4, 15.8, 28.4, 21.8, 30.6, 8.9}},
    {"LLaVA 1.5", {26.1, 11.8, 7.2, 7.3, 5.3, 4.2, 6.9}},
    {"InstructBlip", {26.1, 4.7, 6.2, 3.3, 4.0, 3.8, 5.3}},
    {"MiniGPT4-2", {19.7, 19.7, 20.0, 21.2, 19.3, 18.4, 16.5}},
};
const std::vector<double> kPublishedAircraftAvg = {29.10, 18.40, 12.29, 15.04,
                                                   12.59, 14.24, 9.39};

} // namespace

TEST_CASE("main table reproduces the published average row") {
    std::vector<ResultRecord> records;
    for (const auto& [model, accs] : kPublishedMain)
        for (std::size_t c = 0; c < kConditions.size(); ++c)
            inject(records, model, "composite", kConditions[c], accs[c]);

    auto table = table_main(records);
    REQUIRE(table.models.back() == "Avg");
    for (std::size_t c = 0; c < kConditions.size(); ++c) {
        const auto* cell = table.cell("Avg", kConditions[c]);
        REQUIRE(cell != nullptr);
        CHECK_THAT(cell->accuracy, Catch::Matchers::WithinAbs(kPublishedAvg[c], 0.05 + 1e-9));
    }
    // per-model rows echo the injected values exactly
    for (const auto& [model, accs] : kPublishedMain)
        for (std::size_t c = 0; c < kConditions.size(); ++c)
            CHECK_THAT(table.cell(model, kConditions[c])->accuracy,
                       Catch::Matchers::WithinAbs(accs[c], 1e-9));
}

TEST_CASE("per-dataset table reproduces the Aircraft average row") {
    std::vector<ResultRecord> records;
    for (const auto& [model, accs] : kPublishedAircraft)
        for (std::size_t c = 0; c < kConditions.size(); ++c)
            inject(records, model, "aircraft", kConditions[c], accs[c]);

    auto tables = table_per_dataset(records);
    REQUIRE(tables.size() == 1);
    CHECK(tables[0].dataset == "aircraft");
    for (std::size_t c = 0; c < kConditions.size(); ++c) {
        const auto* cell = tables[0].cell("Avg", kConditions[c]);
        REQUIRE(cell != nullptr);
        CHECK_THAT(cell->accuracy,
                   Catch::Matchers::WithinAbs(kPublishedAircraftAvg[c], 0.05 + 1e-9));
    }
}

TEST_CASE("single model with all answers correct gives a 100.0 row") {
    std::vector<ResultRecord> records;
    inject(records, "only", "ds", "no_text", 100.0, 50);
    auto table = table_main(records);
    CHECK_THAT(table.cell("only", "no_text")->accuracy, Catch::Matchers::WithinAbs(100.0, 1e-12));
    CHECK(report::format_accuracy(table.cell("only", "no_text")->accuracy) == "100.0");
}

TEST_CASE("single-dataset run: per-dataset table equals the main table") {
    std::vector<ResultRecord> records;
    inject(records, "m", "solo", "no_text", 70.0, 10);
    inject(records, "m", "solo", "random_class", 40.0, 10);
    auto main = table_main(records);
    auto per = table_per_dataset(records);
    REQUIRE(per.size() == 1);
    for (const auto& cond : main.conditions) {
        CHECK(main.cell("m", cond)->accuracy == per[0].cell("m", cond)->accuracy);
        CHECK(main.cell("Avg", cond)->accuracy == per[0].cell("Avg", cond)->accuracy);
    }
}

TEST_CASE("main table is the elementwise mean of per-dataset tables") {
    std::vector<ResultRecord> records;
    inject(records, "m", "d1", "no_text", 80.0, 10);
    inject(records, "m", "d2", "no_text", 60.0, 10);
    inject(records, "m", "d1", "random_class", 50.0, 10);
    inject(records, "m", "d2", "random_class", 10.0, 10);
    auto table = table_main(records);
    CHECK_THAT(table.cell("m", "no_text")->accuracy, Catch::Matchers::WithinAbs(70.0, 1e-9));
    CHECK_THAT(table.cell("m", "random_class")->accuracy, Catch::Matchers::WithinAbs(30.0, 1e-9));
}

TEST_CASE("row minimum flags the most effective attack, not the baseline") {
    std::vector<ResultRecord> records;
    inject(records, "m", "d", "no_text", 10.0, 10); // lower than every attack; must not be flagged
    inject(records, "m", "d", "random_class", 50.0, 10);
    inject(records, "m", "d", "desc_lvlm", 20.0, 10);
    auto table = table_main(records);
    CHECK_FALSE(table.cell("m", "no_text")->min_flag);
    CHECK_FALSE(table.cell("m", "random_class")->min_flag);
    CHECK(table.cell("m", "desc_lvlm")->min_flag);
}

TEST_CASE("rounding is half away from zero at one decimal") {
    CHECK(report::format_accuracy(19.75) == "19.8");
    CHECK(report::format_accuracy(52.85) == "52.9");
    CHECK(report::format_accuracy(36.425) == "36.4");
    CHECK(report::format_accuracy(0.05) == "0.1");
    CHECK(report::format_accuracy(100.0) == "100.0");
}

TEST_CASE("report rendering is bit-stable across recomputation") {
    std::vector<ResultRecord> records;
    inject(records, "b-model", "d2", "no_text", 61.5, 40);
    inject(records, "a-model", "d1", "no_text", 72.5, 40);
    inject(records, "a-model", "d1", "random_class", 33.0, 40);
    inject(records, "b-model", "d2", "random_class", 21.0, 40);
    CHECK(report::render_markdown(records) == report::render_markdown(records));
    CHECK(report::render_csv(records) == report::render_csv(records));
    // rows sort case-insensitively by model
    auto table = table_main(records);
    REQUIRE(table.models.size() == 3);
    CHECK(table.models[0] == "a-model");
    CHECK(table.models[1] == "b-model");
}

TEST_CASE("skipped records are surfaced, not silently dropped") {
    std::vector<ResultRecord> records;
    inject(records, "m", "d", "no_text", 50.0, 10);
    ResultRecord skipped;
    skipped.model_name = "m";
    skipped.dataset = "d";
    skipped.sample_id = "sx";
    skipped.condition = "no_text";
    skipped.prompt_variant = "standard";
    skipped.skipped = true;
    skipped.error = "transport";
    records.push_back(skipped);

    auto table = table_main(records);
    const auto* cell = table.cell("m", "no_text");
    CHECK(cell->n == 10);      // graded only
    CHECK(cell->skipped == 1); // discrepancy surfaced
    auto md = report::render_markdown(records);
    CHECK(md.find("skipped") != std::string::npos);
}

TEST_CASE("unparseable responses show up in the parse-failure rate") {
    std::vector<ResultRecord> records;
    for (int i = 0; i < 10; ++i) {
        ResultRecord r;
        r.model_name = "m";
        r.dataset = "d";
        r.sample_id = "s" + std::to_string(i);
        r.condition = "no_text";
        r.prompt_variant = "standard";
        if (i < 4) {
            r.raw_response = "gibberish"; // no parsed_index
            r.correct = false;
        } else {
            r.parsed_index = 1;
            r.correct = true;
        }
        records.push_back(std::move(r));
    }
    auto table = table_main(records);
    const auto* cell = table.cell("m", "no_text");
    CHECK(cell->parse_failures == 4);
    CHECK_THAT(cell->parse_failure_rate(), Catch::Matchers::WithinAbs(40.0, 1e-9));
}

TEST_CASE("description ablation summarizes the three modes") {
    std::vector<ResultRecord> records;
    auto add_mode = [&](const std::string& mode, double acc) {
        int n = 100;
        int correct = static_cast<int>(acc);
        for (int i = 0; i < n; ++i) {
            ResultRecord r;
            r.model_name = "m";
            r.dataset = "d";
            r.sample_id = "s" + std::to_string(i);
            r.condition = "desc_lvlm";
            r.prompt_variant = "standard";
            r.description_mode = mode;
            r.parsed_index = 1;
            r.correct = i < correct;
            records.push_back(std::move(r));
        }
    };
    add_mode("own", 20.0);
    add_mode("none", 60.0);
    add_mode("random_other", 40.0);

    auto ablation = report::ablation_descriptions(records);
    REQUIRE(ablation.models == std::vector<std::string>{"m"});
    CHECK_THAT(ablation.accuracy.at("m").at("own"), Catch::Matchers::WithinAbs(20.0, 1e-9));
    CHECK_THAT(ablation.accuracy.at("m").at("none"), Catch::Matchers::WithinAbs(60.0, 1e-9));
    CHECK_THAT(ablation.accuracy.at("m").at("random_other"),
               Catch::Matchers::WithinAbs(40.0, 1e-9));
    auto csv = report::render_descriptions_csv(records);
    CHECK(csv.find("m,none,60.0,100") != std::string::npos);
}

TEST_CASE("defense ablation reports signed ignore-text deltas") {
    std::vector<ResultRecord> records;
    auto add = [&](const std::string& condition, const std::string& variant, double acc) {
        for (int i = 0; i < 100; ++i) {
            ResultRecord r;
            r.model_name = "m";
            r.dataset = "d";
            r.sample_id = "s" + std::to_string(i);
            r.condition = condition;
            r.prompt_variant = variant;
            r.parsed_index = 1;
            r.correct = i < static_cast<int>(acc);
            records.push_back(std::move(r));
        }
    };
    add("no_text", "standard", 80.0);
    add("random_class", "standard", 30.0);
    add("random_class", "ignore_text", 40.0); // defense recovers 10 points

    auto rows = report::ablation_defense(records);
    REQUIRE(rows.size() == 1);
    CHECK_THAT(*rows[0].baseline_no_attack, Catch::Matchers::WithinAbs(80.0, 1e-9));
    CHECK_THAT(*rows[0].attacked_standard, Catch::Matchers::WithinAbs(30.0, 1e-9));
    CHECK_THAT(*rows[0].attacked_ignore_text, Catch::Matchers::WithinAbs(40.0, 1e-9));
    CHECK_THAT(*rows[0].delta(), Catch::Matchers::WithinAbs(10.0, 1e-9));
    auto csv = report::render_defense_csv(records);
    CHECK(csv.find("m,80.0,30.0,40.0,+10.0") != std::string::npos);
}

TEST_CASE("empty record sets are rejected") {
    CHECK_THROWS_AS(table_main({}), ValidationError);
}
