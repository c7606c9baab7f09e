// Aggregation of result records into the benchmark tables: the main
// dataset-averaged accuracy matrix, per-dataset breakdowns, the
// description-mode ablation, and the ignore-text defense deltas.
// Aggregation runs in full precision; rounding (half away from zero,
// one decimal) happens at display only.

#pragma once

#include "typobench/attacks.hpp"
#include "typobench/detail/jsonl.hpp"
#include "typobench/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace typobench::report {

using evaluator::ResultRecord;

inline const std::vector<std::string>& canonical_conditions() {
    static const std::vector<std::string> order = {
        "no_text",   "random_class", "class_ve", "class_llm",
        "class_lvlm", "desc_llm",     "desc_lvlm"};
    return order;
}

inline std::string condition_label(const std::string& condition) {
    static const std::map<std::string, std::string> labels = {
        {"no_text", "No Text"},           {"random_class", "Random Class"},
        {"class_ve", "Class Based (VE)"}, {"class_llm", "Class Based (LLM)"},
        {"class_lvlm", "Class Based (LVLM)"}, {"desc_llm", "Descriptive (LLM)"},
        {"desc_lvlm", "Descriptive (LVLM)"}};
    auto it = labels.find(condition);
    return it == labels.end() ? condition : it->second;
}

struct AccuracyCell {
    std::string model;     // row ("Avg" for the average row)
    std::string dataset;   // "Avg" in the dataset-averaged table
    std::string condition;
    double accuracy = 0.0; // percentage, full precision
    std::size_t n = 0;     // graded items
    std::size_t parse_failures = 0;
    std::size_t skipped = 0;
    bool min_flag = false; // lowest attack accuracy in its row

    double parse_failure_rate() const {
        return n == 0 ? 0.0 : 100.0 * static_cast<double>(parse_failures) / static_cast<double>(n);
    }
};

struct TableMatrix {
    std::string dataset; // "Avg" for the main table
    std::vector<std::string> conditions;
    std::vector<std::string> models; // sorted rows; "Avg" appended last
    std::map<std::string, std::map<std::string, AccuracyCell>> cells; // model -> condition -> cell

    const AccuracyCell* cell(const std::string& model, const std::string& condition) const {
        auto row = cells.find(model);
        if (row == cells.end()) return nullptr;
        auto it = row->second.find(condition);
        return it == row->second.end() ? nullptr : &it->second;
    }
};

/// round-half-away-from-zero to one decimal, display form
inline std::string format_accuracy(double value) {
    double rounded = std::round(value * 10.0) / 10.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", rounded);
    return buf;
}

// ---------------------------------------------------------------------------
// aggregation

namespace aggdetail {

struct Strata {
    std::size_t correct = 0;
    std::size_t graded = 0;
    std::size_t parse_failures = 0;
    std::size_t skipped = 0;

    double accuracy() const {
        return graded == 0 ? 0.0
                           : 100.0 * static_cast<double>(correct) / static_cast<double>(graded);
    }
};

struct Key {
    std::string model, dataset, condition;
    auto operator<=>(const Key&) const = default;
};

/// Main-protocol filter: standard prompt, own description.
inline bool is_main_protocol(const ResultRecord& r) {
    if (r.prompt_variant != "standard") return false;
    if (r.description_mode && *r.description_mode != "own") return false;
    return true;
}

template <typename Filter>
std::map<Key, Strata> collect(const std::vector<ResultRecord>& records, Filter&& keep) {
    std::map<Key, Strata> out;
    for (const auto& r : records) {
        if (!keep(r)) continue;
        auto& s = out[{r.model_name, r.dataset, r.condition}];
        if (r.skipped) {
            ++s.skipped;
            continue;
        }
        ++s.graded;
        if (!r.parsed_index) ++s.parse_failures;
        if (r.correct) ++s.correct;
    }
    return out;
}

inline std::vector<std::string> sorted_models(const std::map<Key, Strata>& strata) {
    std::set<std::string> models;
    for (const auto& [k, v] : strata) models.insert(k.model);
    std::vector<std::string> out(models.begin(), models.end());
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
        auto fa = detail::casefold(a), fb = detail::casefold(b);
        return fa != fb ? fa < fb : a < b;
    });
    return out;
}

inline std::vector<std::string> present_conditions(const std::map<Key, Strata>& strata) {
    std::set<std::string> present;
    for (const auto& [k, v] : strata) present.insert(k.condition);
    std::vector<std::string> out;
    for (const auto& c : canonical_conditions())
        if (present.count(c)) out.push_back(c);
    for (const auto& c : present) // non-canonical conditions go last, sorted
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    return out;
}

inline void flag_row_minimum(TableMatrix& table) {
    for (const auto& model : table.models) {
        std::optional<double> lowest;
        for (const auto& cond : table.conditions) {
            if (cond == "no_text") continue;
            if (auto* c = table.cell(model, cond))
                if (!lowest || c->accuracy < *lowest) lowest = c->accuracy;
        }
        if (!lowest) continue;
        for (const auto& cond : table.conditions) {
            if (cond == "no_text") continue;
            auto row = table.cells.find(model);
            if (row == table.cells.end()) continue;
            auto it = row->second.find(cond);
            if (it != row->second.end() && it->second.accuracy == *lowest)
                it->second.min_flag = true;
        }
    }
}

inline void append_avg_row(TableMatrix& table) {
    std::map<std::string, AccuracyCell> avg_row;
    for (const auto& cond : table.conditions) {
        AccuracyCell cell;
        cell.model = "Avg";
        cell.dataset = table.dataset;
        cell.condition = cond;
        double sum = 0.0;
        std::size_t models_with_cell = 0;
        for (const auto& model : table.models) {
            if (model == "Avg") continue;
            if (auto* c = table.cell(model, cond)) {
                sum += c->accuracy;
                ++models_with_cell;
                cell.n += c->n;
                cell.parse_failures += c->parse_failures;
                cell.skipped += c->skipped;
            }
        }
        if (models_with_cell == 0) continue;
        cell.accuracy = sum / static_cast<double>(models_with_cell);
        avg_row.emplace(cond, std::move(cell));
    }
    if (!avg_row.empty()) {
        table.models.push_back("Avg");
        table.cells["Avg"] = std::move(avg_row);
    }
}

} // namespace aggdetail

/// One Table-1-shaped matrix per dataset, Avg row appended.
inline std::vector<TableMatrix> table_per_dataset(const std::vector<ResultRecord>& records) {
    auto strata = aggdetail::collect(records, aggdetail::is_main_protocol);
    if (strata.empty()) throw ValidationError("table_per_dataset: no main-protocol records");

    std::set<std::string> datasets;
    for (const auto& [k, v] : strata) datasets.insert(k.dataset);

    std::vector<TableMatrix> tables;
    for (const auto& ds : datasets) {
        std::map<aggdetail::Key, aggdetail::Strata> subset;
        for (const auto& [k, v] : strata)
            if (k.dataset == ds) subset.emplace(k, v);

        TableMatrix table;
        table.dataset = ds;
        table.models = aggdetail::sorted_models(subset);
        table.conditions = aggdetail::present_conditions(subset);
        for (const auto& [k, s] : subset) {
            if (s.graded == 0) continue; // all items skipped for this stratum
            AccuracyCell cell;
            cell.model = k.model;
            cell.dataset = ds;
            cell.condition = k.condition;
            cell.accuracy = s.accuracy();
            cell.n = s.graded;
            cell.parse_failures = s.parse_failures;
            cell.skipped = s.skipped;
            table.cells[k.model].emplace(k.condition, std::move(cell));
        }
        aggdetail::append_avg_row(table);
        aggdetail::flag_row_minimum(table);
        tables.push_back(std::move(table));
    }
    return tables;
}

/// The paper's main layout: per model, accuracy averaged (unweighted) over
/// datasets; an Avg row averages the models.
inline TableMatrix table_main(const std::vector<ResultRecord>& records) {
    auto per_dataset = table_per_dataset(records);

    TableMatrix table;
    table.dataset = "Avg";
    std::set<std::string> models;
    std::set<std::string> conditions;
    for (const auto& t : per_dataset) {
        for (const auto& m : t.models)
            if (m != "Avg") models.insert(m);
        for (const auto& c : t.conditions) conditions.insert(c);
    }
    table.models.assign(models.begin(), models.end());
    std::sort(table.models.begin(), table.models.end(),
              [](const std::string& a, const std::string& b) {
                  auto fa = detail::casefold(a), fb = detail::casefold(b);
                  return fa != fb ? fa < fb : a < b;
              });
    for (const auto& c : canonical_conditions())
        if (conditions.count(c)) table.conditions.push_back(c);
    for (const auto& c : conditions)
        if (std::find(table.conditions.begin(), table.conditions.end(), c) ==
            table.conditions.end())
            table.conditions.push_back(c);

    for (const auto& model : table.models) {
        for (const auto& cond : table.conditions) {
            double sum = 0.0;
            std::size_t datasets_with_cell = 0;
            AccuracyCell cell;
            cell.model = model;
            cell.dataset = "Avg";
            cell.condition = cond;
            for (const auto& t : per_dataset) {
                if (auto* c = t.cell(model, cond)) {
                    sum += c->accuracy;
                    ++datasets_with_cell;
                    cell.n += c->n;
                    cell.parse_failures += c->parse_failures;
                    cell.skipped += c->skipped;
                }
            }
            if (datasets_with_cell == 0) continue;
            cell.accuracy = sum / static_cast<double>(datasets_with_cell);
            table.cells[model].emplace(cond, std::move(cell));
        }
    }
    aggdetail::append_avg_row(table);
    aggdetail::flag_row_minimum(table);
    return table;
}

// ---------------------------------------------------------------------------
// ablations

struct DescriptionAblation {
    std::vector<std::string> models;
    std::vector<std::string> modes{"none", "random_other", "own"};
    // model -> mode -> dataset-averaged accuracy (absent when not run)
    std::map<std::string, std::map<std::string, double>> accuracy;
    std::map<std::string, std::map<std::string, std::size_t>> n;
};

/// Fig-3 shape: accuracy of the descriptive conditions under each
/// description mode, dataset-averaged per model.
inline DescriptionAblation ablation_descriptions(const std::vector<ResultRecord>& records) {
    DescriptionAblation out;
    std::set<std::string> models;
    for (const auto& mode : out.modes) {
        auto strata = aggdetail::collect(records, [&](const ResultRecord& r) {
            return r.prompt_variant == "standard" && r.description_mode &&
                   *r.description_mode == mode &&
                   (r.condition == "desc_llm" || r.condition == "desc_lvlm");
        });
        // model -> dataset -> pooled accuracy over the desc conditions
        std::map<std::string, std::map<std::string, aggdetail::Strata>> pooled;
        for (const auto& [k, s] : strata) {
            auto& p = pooled[k.model][k.dataset];
            p.correct += s.correct;
            p.graded += s.graded;
            p.parse_failures += s.parse_failures;
            p.skipped += s.skipped;
        }
        for (const auto& [model, per_ds] : pooled) {
            double sum = 0.0;
            std::size_t count = 0, n = 0;
            for (const auto& [ds, s] : per_ds) {
                if (s.graded == 0) continue;
                sum += s.accuracy();
                ++count;
                n += s.graded;
            }
            if (count == 0) continue;
            models.insert(model);
            out.accuracy[model][mode] = sum / static_cast<double>(count);
            out.n[model][mode] = n;
        }
    }
    out.models.assign(models.begin(), models.end());
    return out;
}

struct DefenseRow {
    std::string model;
    std::optional<double> baseline_no_attack; // no_text, standard prompt
    std::optional<double> attacked_standard;
    std::optional<double> attacked_ignore_text;

    std::optional<double> delta() const {
        if (attacked_standard && attacked_ignore_text)
            return *attacked_ignore_text - *attacked_standard;
        return std::nullopt;
    }
};

/// Fig-4 shape: per model, attacked accuracy with the standard vs the
/// ignore-text prompt (dataset-averaged, attack conditions pooled), plus the
/// no-attack baseline.
inline std::vector<DefenseRow> ablation_defense(const std::vector<ResultRecord>& records) {
    auto accuracy_for = [&](const std::string& variant, bool attacked)
        -> std::map<std::string, double> {
        auto strata = aggdetail::collect(records, [&](const ResultRecord& r) {
            if (r.prompt_variant != variant) return false;
            if (r.description_mode && *r.description_mode != "own") return false;
            return attacked ? r.condition != "no_text" : r.condition == "no_text";
        });
        std::map<std::string, std::map<std::string, aggdetail::Strata>> pooled;
        for (const auto& [k, s] : strata) {
            auto& p = pooled[k.model][k.dataset];
            p.correct += s.correct;
            p.graded += s.graded;
        }
        std::map<std::string, double> out;
        for (const auto& [model, per_ds] : pooled) {
            double sum = 0.0;
            std::size_t count = 0;
            for (const auto& [ds, s] : per_ds) {
                if (s.graded == 0) continue;
                sum += s.accuracy();
                ++count;
            }
            if (count > 0) out[model] = sum / static_cast<double>(count);
        }
        return out;
    };

    auto baseline = accuracy_for("standard", false);
    auto standard = accuracy_for("standard", true);
    auto ignore = accuracy_for("ignore_text", true);

    std::set<std::string> models;
    for (const auto& [m, v] : baseline) models.insert(m);
    for (const auto& [m, v] : standard) models.insert(m);
    for (const auto& [m, v] : ignore) models.insert(m);

    std::vector<DefenseRow> rows;
    for (const auto& m : models) {
        DefenseRow row;
        row.model = m;
        if (auto it = baseline.find(m); it != baseline.end()) row.baseline_no_attack = it->second;
        if (auto it = standard.find(m); it != standard.end()) row.attacked_standard = it->second;
        if (auto it = ignore.find(m); it != ignore.end()) row.attacked_ignore_text = it->second;
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// rendering

inline std::string render_table_markdown(const TableMatrix& table) {
    std::string out;
    out += "| Model |";
    for (const auto& c : table.conditions) out += " " + condition_label(c) + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < table.conditions.size(); ++i) out += "---|";
    out += "\n";
    for (const auto& model : table.models) {
        out += "| " + model + " |";
        for (const auto& c : table.conditions) {
            const auto* cell = table.cell(model, c);
            if (!cell) {
                out += " n/a |";
            } else {
                std::string v = format_accuracy(cell->accuracy);
                out += cell->min_flag ? " **" + v + "** |" : " " + v + " |";
            }
        }
        out += "\n";
    }
    return out;
}

inline std::string render_markdown(const std::vector<ResultRecord>& records) {
    auto main = table_main(records);
    auto per_dataset = table_per_dataset(records);

    std::size_t skipped = 0;
    for (const auto& r : records)
        if (r.skipped) ++skipped;

    std::string out = "# Typographic attack benchmark report\n\n";
    out += "Accuracy (%), averaged over all datasets. Bold marks each row's most effective "
           "attack (lowest accuracy).\n\n";
    out += render_table_markdown(main);
    if (skipped > 0)
        out += "\nWarning: " + std::to_string(skipped) +
               " planned item(s) were skipped (transport failures); their strata undercount.\n";
    out += "\n## Per-dataset breakdown\n";
    for (const auto& t : per_dataset) {
        out += "\n### " + t.dataset + "\n\n";
        out += render_table_markdown(t);
    }

    auto desc = ablation_descriptions(records);
    if (!desc.models.empty()) {
        out += "\n## Description ablation (descriptive attacks)\n\n| Model |";
        for (const auto& m : desc.modes) out += " " + m + " |";
        out += "\n|---|";
        for (std::size_t i = 0; i < desc.modes.size(); ++i) out += "---|";
        out += "\n";
        for (const auto& model : desc.models) {
            out += "| " + model + " |";
            for (const auto& mode : desc.modes) {
                auto mit = desc.accuracy.find(model);
                if (mit != desc.accuracy.end() && mit->second.count(mode))
                    out += " " + format_accuracy(mit->second.at(mode)) + " |";
                else
                    out += " n/a |";
            }
            out += "\n";
        }
    }

    auto defense = ablation_defense(records);
    bool any_ignore = std::any_of(defense.begin(), defense.end(),
                                  [](const DefenseRow& r) { return r.attacked_ignore_text.has_value(); });
    if (any_ignore) {
        out += "\n## Ignore-text defense\n\n"
               "| Model | No-attack baseline | Attacked (standard) | Attacked (ignore text) | Delta |\n"
               "|---|---|---|---|---|\n";
        for (const auto& r : defense) {
            auto fmt = [](const std::optional<double>& v) {
                return v ? format_accuracy(*v) : std::string("n/a");
            };
            std::string delta = "n/a";
            if (auto d = r.delta()) {
                delta = format_accuracy(std::fabs(*d));
                delta = (*d >= 0 ? "+" : "-") + delta;
            }
            out += "| " + r.model + " | " + fmt(r.baseline_no_attack) + " | " +
                   fmt(r.attacked_standard) + " | " + fmt(r.attacked_ignore_text) + " | " + delta +
                   " |\n";
        }
    }
    return out;
}

inline std::string render_csv(const std::vector<ResultRecord>& records) {
    auto main = table_main(records);
    auto per_dataset = table_per_dataset(records);
    std::string out = "dataset,model,condition,accuracy,n,parse_failure_rate,skipped,min_flag\n";
    auto emit = [&](const TableMatrix& t) {
        for (const auto& model : t.models) {
            for (const auto& cond : t.conditions) {
                const auto* cell = t.cell(model, cond);
                if (!cell) continue;
                out += t.dataset + "," + model + "," + cond + "," +
                       format_accuracy(cell->accuracy) + "," + std::to_string(cell->n) + "," +
                       format_accuracy(cell->parse_failure_rate()) + "," +
                       std::to_string(cell->skipped) + "," + (cell->min_flag ? "1" : "0") + "\n";
            }
        }
    };
    emit(main);
    for (const auto& t : per_dataset) emit(t);
    return out;
}

inline std::string render_descriptions_csv(const std::vector<ResultRecord>& records) {
    auto desc = ablation_descriptions(records);
    std::string out = "model,description_mode,accuracy,n\n";
    for (const auto& model : desc.models) {
        for (const auto& mode : desc.modes) {
            auto mit = desc.accuracy.find(model);
            if (mit == desc.accuracy.end() || !mit->second.count(mode)) continue;
            out += model + "," + mode + "," + format_accuracy(mit->second.at(mode)) + "," +
                   std::to_string(desc.n.at(model).at(mode)) + "\n";
        }
    }
    return out;
}

inline std::string render_defense_csv(const std::vector<ResultRecord>& records) {
    auto defense = ablation_defense(records);
    std::string out = "model,baseline_no_attack,attacked_standard,attacked_ignore_text,delta\n";
    auto fmt = [](const std::optional<double>& v) {
        return v ? format_accuracy(*v) : std::string();
    };
    for (const auto& r : defense) {
        std::string delta;
        if (auto d = r.delta()) delta = (*d >= 0 ? "+" : "") + format_accuracy(*d);
        out += r.model + "," + fmt(r.baseline_no_attack) + "," + fmt(r.attacked_standard) + "," +
               fmt(r.attacked_ignore_text) + "," + delta + "\n";
    }
    return out;
}

inline std::vector<ResultRecord> load_records(const std::filesystem::path& path) {
    std::vector<ResultRecord> out;
    for (const auto& line : detail::read_jsonl(path)) out.push_back(ResultRecord::from_json(line));
    return out;
}

} // namespace typobench::report
