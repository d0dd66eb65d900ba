#pragma once

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pcaharm/common.hpp"
#include "pcaharm/evaluate.hpp"
#include "pcaharm/experiment.hpp"
#include "pcaharm/ingest.hpp"
#include "pcaharm/manifest.hpp"
#include "pcaharm/pca.hpp"
#include "pcaharm/png_io.hpp"

namespace pcaharm {

struct DatasetConfig {
    std::string name;
    fs::path dir;
    DatasetLayout layout;
};

/// Declarative run description.
///
/// Global `key = value` lines come first, then one `[dataset <name>]` block per dataset with its
/// own `dir`, and optionally `pattern`, `mask_pattern`, `mask_dir`, `require_tumor`. Relative
/// paths are resolved against the directory of the config file. `#` starts a comment line.
struct RunConfig {
    fs::path output_dir = "pcaharm_out";
    std::uint64_t seed = 42;
    std::optional<std::pair<std::size_t, std::size_t>> resize = std::pair<std::size_t, std::size_t>{256, 256};
    std::string trainer;
    SelectionPolicy selection;
    bool fit_on_train = false;
    std::string external_subset = "all";
    DeclineReference decline_reference = DeclineReference::row;
    std::size_t worst_k = 10;
    TrainerSettings trainer_settings;
    std::vector<DatasetConfig> datasets;

    static std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
        auto x = text.find('x');
        try {
            if (x == std::string::npos) throw std::invalid_argument("no separator");
            std::size_t w = std::stoul(text.substr(0, x));
            std::size_t h = std::stoul(text.substr(x + 1));
            if (w == 0 || h == 0) throw std::invalid_argument("zero");
            return {w, h};
        } catch (const std::logic_error&) {
            throw Error("malformed size '" + text + "', expected WxH");
        }
    }

    static RunConfig parse(const std::string& text, const fs::path& base_dir = {}) {
        RunConfig cfg;
        DatasetLayout defaults;
        auto resolve = [&](const std::string& p) {
            fs::path path(p);
            return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
        };
        auto trim = [](std::string s) {
            const char* ws = " \t\r";
            s.erase(0, s.find_first_not_of(ws));
            s.erase(s.find_last_not_of(ws) + 1);
            return s;
        };
        auto as_bool = [](const std::string& v) {
            if (v == "true" || v == "yes" || v == "1") return true;
            if (v == "false" || v == "no" || v == "0") return false;
            throw Error("expected a boolean, got '" + v + "'");
        };

        std::istringstream in(text);
        std::string raw;
        int line_no = 0;
        DatasetConfig* current = nullptr;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string line = trim(raw);
            if (line.empty() || line[0] == '#') continue;
            const std::string where = "config line " + std::to_string(line_no) + ": ";
            if (line.front() == '[') {
                if (line.back() != ']' || line.rfind("[dataset ", 0) != 0) {
                    throw Error(where + "expected '[dataset <name>]'");
                }
                DatasetConfig d;
                d.name = trim(line.substr(9, line.size() - 10));
                if (d.name.empty()) throw Error(where + "dataset block without a name");
                d.layout = defaults;
                cfg.datasets.push_back(std::move(d));
                current = &cfg.datasets.back();
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) throw Error(where + "expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            try {
                if (current) {
                    if (key == "dir") current->dir = resolve(value);
                    else if (key == "pattern") current->layout.image_pattern = value;
                    else if (key == "mask_pattern") current->layout.mask_pattern = value;
                    else if (key == "mask_dir") current->layout.mask_dir = resolve(value);
                    else if (key == "require_tumor") current->layout.require_tumor = as_bool(value);
                    else throw Error("unknown dataset key '" + key + "'");
                    continue;
                }
                if (key == "output_dir") cfg.output_dir = resolve(value);
                else if (key == "seed") cfg.seed = cfg.trainer_settings.seed = std::stoull(value);
                else if (key == "resize") cfg.resize = value == "none" ? std::nullopt : std::optional(parse_size(value));
                else if (key == "trainer") cfg.trainer = value;
                else if (key == "selection") cfg.selection = SelectionPolicy::parse(value);
                else if (key == "fit_on") {
                    if (value != "all" && value != "train") throw Error("fit_on must be 'all' or 'train'");
                    cfg.fit_on_train = value == "train";
                } else if (key == "external_subset") {
                    if (value != "all" && value != "test") throw Error("external_subset must be 'all' or 'test'");
                    cfg.external_subset = value;
                } else if (key == "decline_reference") {
                    if (value == "row") cfg.decline_reference = DeclineReference::row;
                    else if (value == "column") cfg.decline_reference = DeclineReference::column;
                    else throw Error("decline_reference must be 'row' or 'column'");
                } else if (key == "worst_k") cfg.worst_k = std::stoul(value);
                else if (key == "epochs") cfg.trainer_settings.epochs = std::stoi(value);
                else if (key == "batch_size") cfg.trainer_settings.batch_size = std::stoi(value);
                else if (key == "patience") cfg.trainer_settings.patience = std::stoi(value);
                else if (key == "beta") cfg.trainer_settings.beta = std::stod(value);
                else if (key == "pattern") defaults.image_pattern = value;
                else if (key == "mask_pattern") defaults.mask_pattern = value;
                else if (key == "require_tumor") defaults.require_tumor = as_bool(value);
                else throw Error("unknown key '" + key + "'");
            } catch (const std::logic_error&) {
                throw Error(where + "malformed value for '" + key + "'");
            } catch (const Error& e) {
                throw Error(where + e.what());
            }
        }
        for (const auto& d : cfg.datasets) {
            if (d.dir.empty()) throw Error("dataset '" + d.name + "' has no dir");
        }
        return cfg;
    }

    static RunConfig load(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot read config '" + path.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), fs::absolute(path).parent_path());
    }
};

enum class Stage { ingest, pca, train, evaluate, report };

inline constexpr Stage kStages[] = {Stage::ingest, Stage::pca, Stage::train, Stage::evaluate, Stage::report};

inline const char* to_string(Stage s) {
    switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::pca: return "pca";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
    }
    return "?";
}

inline Stage parse_stage(const std::string& s) {
    for (Stage st : kStages) {
        if (s == to_string(st)) return st;
    }
    throw Error("unknown stage '" + s + "'");
}

/// Directory layout of a run.
struct RunLayout {
    fs::path root;

    fs::path dataset_dir(const std::string& ds) const { return root / "data" / ds; }
    fs::path images(const std::string& ds, Arm arm) const { return dataset_dir(ds) / to_string(arm) / "images"; }
    fs::path masks(const std::string& ds) const { return dataset_dir(ds) / "masks"; }
    fs::path split_file(const std::string& ds) const { return dataset_dir(ds) / "split.csv"; }
    fs::path matrix(const std::string& ds) const { return dataset_dir(ds) / "original" / "images.umx"; }
    fs::path model(const std::string& ds) const { return root / "pca" / (ds + ".upm"); }
    fs::path selection(const std::string& ds) const { return root / "pca" / (ds + ".selection"); }
    fs::path manifests() const { return root / "manifests"; }
    fs::path runs() const { return root / "runs"; }
    fs::path results() const { return root / "results" / "results.csv"; }
    fs::path per_image(const PairKey& k) const {
        return root / "results" / "per_image" /
               (std::string(to_string(k.arm)) + "_" + k.train_dataset + "_on_" + k.eval_dataset + ".csv");
    }
    fs::path reports() const { return root / "reports"; }
    fs::path marker(Stage s) const { return root / (std::string(".done_") + to_string(s)); }

    DatasetPaths paths(const std::string& ds) const {
        return {ds, images(ds, Arm::original), images(ds, Arm::pca), masks(ds), split_file(ds)};
    }
};

struct RunOptions {
    /// Directory holding results.csv (or the CSV itself); skips straight to the report stage.
    std::optional<fs::path> results_from;
    /// Run only this stage; earlier stages must already be complete.
    std::optional<Stage> stage;
};

namespace pipeline {

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

inline std::vector<DatasetRecord> load_ingested(const RunLayout& layout, const std::string& ds) {
    DatasetLayout l;
    l.image_pattern = "*.png";
    l.mask_pattern = "{id}.png";
    l.mask_dir = layout.masks(ds);
    return load_dataset(layout.images(ds, Arm::original), l);
}

inline void ingest(const RunConfig& cfg, const RunLayout& layout) {
    for (const auto& d : cfg.datasets) {
        DatasetLayout l = d.layout;
        l.masks_required = true;
        auto records = load_dataset(d.dir, l);
        if (records.size() < 3) throw IngestError("dataset '" + d.name + "' has fewer than 3 usable records");
        if (cfg.resize) {
            for (auto& r : records) r = resize_record(r, cfg.resize->first, cfg.resize->second);
        }
        fs::remove_all(layout.dataset_dir(d.name));
        fs::create_directories(layout.images(d.name, Arm::original));
        fs::create_directories(layout.masks(d.name));
        for (auto& r : records) {
            r.image = quantized(r.image);
            write_png(layout.images(d.name, Arm::original) / (r.id + ".png"), r.image);
            write_png(layout.masks(d.name) / (r.id + ".png"), *r.mask);
        }
        write_umx(layout.matrix(d.name), flatten(records, Channel::images));
        write_split(layout.split_file(d.name), split_dataset(records, {}, cfg.seed));
        log::info("ingested " + d.name + ": " + std::to_string(records.size()) + " records");
    }
}

inline void harmonize(const RunConfig& cfg, const RunLayout& layout) {
    fs::create_directories(layout.root / "pca");
    fs::create_directories(layout.reports());
    for (const auto& d : cfg.datasets) {
        const auto records = load_ingested(layout, d.name);
        HarmonizeOptions opts;
        opts.policy = cfg.selection;
        if (cfg.fit_on_train) opts.fit_ids = read_split(layout.split_file(d.name)).train_ids;
        const HarmonizeResult result = harmonize_dataset(records, opts);

        const fs::path out_dir = layout.images(d.name, Arm::pca);
        fs::remove_all(out_dir);
        fs::create_directories(out_dir);
        for (const auto& r : result.records) write_png(out_dir / (r.id + ".png"), r.image);
        save_model(layout.model(d.name), result.model);
        write_scree_csv(layout.reports() / ("scree_" + d.name + ".csv"), scree_export(result.model));

        std::ostringstream sel;
        sel.precision(17);
        sel << "k=" << result.selection.k << "\nk_max=" << result.model.k_max()
            << "\ncriterion=" << to_string(result.selection.criterion) << "\nthreshold=" << result.selection.threshold
            << "\nachieved_variance=" << result.selection.achieved_variance << '\n';
        write_text(layout.selection(d.name), sel.str());
    }
}

inline ExperimentPlan plan(const RunConfig& cfg, const RunLayout& layout) {
    std::vector<DatasetPaths> paths;
    for (const auto& d : cfg.datasets) paths.push_back(layout.paths(d.name));
    PlanOptions opts;
    opts.runs_dir = layout.runs();
    opts.trainer = cfg.trainer_settings;
    opts.trainer.seed = cfg.seed;
    opts.external_subset = cfg.external_subset;
    return plan_experiment(paths, opts);
}

inline void run_trainer(const RunConfig& cfg, const RunLayout& layout, const RunManifest& m) {
    const fs::path run_dir = layout.runs() / m.name;
    const fs::path done = run_dir / ".done";
    if (fs::exists(done)) {
        log::debug("skipping completed run " + m.name);
        return;
    }
    const fs::path manifest_path = layout.manifests() / (m.name + ".manifest");
    m.save(manifest_path);
    m.validate();
    fs::remove_all(m.out_predictions);
    fs::create_directories(m.out_predictions);

    const std::string cmd = cfg.trainer + " " + shell_quote(manifest_path.string());
    log::info("running trainer for " + m.name);
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw ExperimentError("trainer failed for '" + m.name + "' (status " + std::to_string(status) + "): " + cmd);
    }
    if (m.is_train() && !fs::exists(m.out_weights)) {
        throw ExperimentError("trainer reported success for '" + m.name + "' but wrote no weights to '" +
                              m.out_weights.string() + "'");
    }
    write_text(done, "ok\n");
}

inline void train(const RunConfig& cfg, const RunLayout& layout) {
    if (cfg.trainer.empty()) throw ExperimentError("no trainer command configured (key 'trainer')");
    fs::create_directories(layout.manifests());
    const ExperimentPlan p = plan(cfg, layout);
    for (const auto& m : p.train) run_trainer(cfg, layout, m);
    for (const auto& m : p.inference) run_trainer(cfg, layout, m);
}

inline std::vector<std::string> all_ids(const SplitAssignment& s) {
    std::vector<std::string> ids;
    for (Split which : {Split::train, Split::val, Split::test}) {
        ids.insert(ids.end(), s.ids(which).begin(), s.ids(which).end());
    }
    return ids;
}

inline void evaluate(const RunConfig& cfg, const RunLayout& layout) {
    const ExperimentPlan p = plan(cfg, layout);
    std::vector<std::string> names;
    for (const auto& d : cfg.datasets) names.push_back(d.name);

    std::vector<CellSource> cells;
    for (const auto& m : p.train) {
        const SplitAssignment split = read_split(m.split_file);
        cells.push_back({{m.eval_dataset, m.train_dataset, m.arm}, m.out_predictions, m.masks_dir, split.test_ids});
    }
    for (const auto& m : p.inference) {
        const SplitAssignment split = read_split(m.split_file);
        auto ids = m.predict_subset == "test" ? split.test_ids : all_ids(split);
        cells.push_back({{m.eval_dataset, m.train_dataset, m.arm}, m.out_predictions, m.masks_dir, std::move(ids)});
    }
    fs::create_directories(layout.per_image({"x", "x", Arm::original}).parent_path());
    const ExperimentTable table = collect_results(names, cells, [&](const CellSource& c, const auto& scores) {
        write_image_scores_csv(layout.per_image(c.key), scores);
    });
    fs::create_directories(layout.results().parent_path());
    write_results_csv(layout.results(), table);
}

inline void report(const RunConfig& cfg, const RunLayout& layout, const fs::path& results_csv) {
    const ExperimentTable table = read_results_csv(results_csv);
    const fs::path dir = layout.reports();
    fs::create_directories(dir);

    const Table2 t2 = render_table2(table);
    write_text(dir / "table2.csv", t2.to_csv());
    write_text(dir / "table2.md", t2.to_markdown());

    const Table3Report t3 = summarize_table3(table, cfg.worst_k, cfg.decline_reference);
    write_text(dir / "table3.csv", table3_csv(t3));

    auto declines = compute_declines(table, Arm::original, cfg.decline_reference);
    const auto pca_declines = compute_declines(table, Arm::pca, cfg.decline_reference);
    const auto worst = worst_k(declines, std::min(cfg.worst_k, declines.size()));
    std::ostringstream summary;
    summary.precision(6);
    summary << "mean external recall decline: original " << mean_decline(declines) << ", pca "
            << mean_decline(pca_declines);
    log::info(summary.str());
    declines.insert(declines.end(), pca_declines.begin(), pca_declines.end());
    write_text(dir / "declines.csv", declines_csv(declines, worst));
}

}  // namespace pipeline

/// Runs ingest -> pca -> train -> evaluate -> report. Each finished stage leaves a marker in the
/// output directory and is skipped on the next invocation, so an interrupted run can be resumed.
inline int run_pipeline(const RunConfig& cfg, const RunOptions& opts = {}) {
    const RunLayout layout{cfg.output_dir};
    fs::create_directories(layout.root);

    if (opts.results_from) {
        fs::path csv = *opts.results_from;
        if (fs::is_directory(csv)) csv /= "results.csv";
        pipeline::report(cfg, layout, csv);
        return 0;
    }
    if (cfg.datasets.size() < 2) throw ExperimentError("the run config must name at least 2 datasets");

    auto execute = [&](Stage s) {
        // Anything downstream of a (re)executed stage is stale.
        bool later = false;
        for (Stage other : kStages) {
            if (other == s) later = true;
            if (later) fs::remove(layout.marker(other));
        }
        switch (s) {
        case Stage::ingest: pipeline::ingest(cfg, layout); break;
        case Stage::pca: pipeline::harmonize(cfg, layout); break;
        case Stage::train: pipeline::train(cfg, layout); break;
        case Stage::evaluate: pipeline::evaluate(cfg, layout); break;
        case Stage::report: pipeline::report(cfg, layout, layout.results()); break;
        }
        pipeline::write_text(layout.marker(s), "ok\n");
    };

    if (opts.stage) {
        for (Stage s : kStages) {
            if (s == *opts.stage) break;
            if (!fs::exists(layout.marker(s))) {
                throw ExperimentError(std::string("stage '") + to_string(*opts.stage) + "' needs stage '" +
                                      to_string(s) + "' to be completed first");
            }
        }
        execute(*opts.stage);
        return 0;
    }
    for (Stage s : kStages) {
        if (fs::exists(layout.marker(s))) {
            log::info(std::string("stage ") + to_string(s) + " already complete, skipping");
            continue;
        }
        log::info(std::string("stage ") + to_string(s));
        execute(s);
    }
    return 0;
}

}  // namespace pcaharm
