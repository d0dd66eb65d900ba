#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcaharm/common.hpp"
#include "pcaharm/experiment.hpp"

namespace pcaharm {

namespace fs = std::filesystem;

/// Work order handed to the trainer as a `key=value` text file.
///
/// A `train` manifest trains on the split's training ids, early-stops on its validation ids and
/// writes test-split predictions of its own dataset to `out_predictions`. A `predict` manifest
/// loads `weights` and predicts `predict_subset` (all|test) of another dataset.
struct RunManifest {
    std::string name;
    std::string mode = "train";  // train | predict
    Arm arm = Arm::original;
    std::string train_dataset;
    std::string eval_dataset;
    fs::path images_dir;
    fs::path masks_dir;
    fs::path split_file;
    std::string predict_subset = "test";
    int epochs = 100;
    int batch_size = 8;
    int patience = 10;
    double beta = 0.5;
    std::uint64_t seed = 42;
    fs::path weights;
    fs::path out_weights;
    fs::path out_predictions;
    fs::path out_log;

    bool is_train() const { return mode == "train"; }

    std::string to_text() const {
        std::ostringstream out;
        out << "name=" << name << '\n'
            << "mode=" << mode << '\n'
            << "arm=" << to_string(arm) << '\n'
            << "train_dataset=" << train_dataset << '\n'
            << "eval_dataset=" << eval_dataset << '\n'
            << "images_dir=" << images_dir.string() << '\n'
            << "masks_dir=" << masks_dir.string() << '\n'
            << "split_file=" << split_file.string() << '\n'
            << "predict_subset=" << predict_subset << '\n'
            << "epochs=" << epochs << '\n'
            << "batch_size=" << batch_size << '\n'
            << "patience=" << patience << '\n'
            << "beta=" << beta << '\n'
            << "seed=" << seed << '\n'
            << "weights=" << weights.string() << '\n'
            << "out_weights=" << out_weights.string() << '\n'
            << "out_predictions=" << out_predictions.string() << '\n'
            << "out_log=" << out_log.string() << '\n';
        return out.str();
    }

    static RunManifest parse(const std::string& text) {
        std::map<std::string, std::string> kv;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ExperimentError("malformed manifest line '" + line + "'");
            // Later lines win, so appended entries override.
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        auto get = [&](const char* key) -> std::string {
            auto it = kv.find(key);
            if (it == kv.end()) throw ExperimentError(std::string("manifest is missing '") + key + "'");
            return it->second;
        };
        RunManifest m;
        try {
            m.name = get("name");
            m.mode = get("mode");
            m.arm = parse_arm(get("arm"));
            m.train_dataset = get("train_dataset");
            m.eval_dataset = get("eval_dataset");
            m.images_dir = get("images_dir");
            m.masks_dir = get("masks_dir");
            m.split_file = get("split_file");
            m.predict_subset = get("predict_subset");
            m.epochs = std::stoi(get("epochs"));
            m.batch_size = std::stoi(get("batch_size"));
            m.patience = std::stoi(get("patience"));
            m.beta = std::stod(get("beta"));
            m.seed = std::stoull(get("seed"));
            m.weights = get("weights");
            m.out_weights = get("out_weights");
            m.out_predictions = get("out_predictions");
            m.out_log = get("out_log");
        } catch (const std::logic_error&) {
            throw ExperimentError("manifest '" + (m.name.empty() ? std::string("?") : m.name) + "' has a malformed number");
        }
        if (m.mode != "train" && m.mode != "predict") throw ExperimentError("unknown manifest mode '" + m.mode + "'");
        if (m.predict_subset != "test" && m.predict_subset != "all") {
            throw ExperimentError("unknown predict_subset '" + m.predict_subset + "'");
        }
        return m;
    }

    static RunManifest load(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw ExperimentError("cannot read manifest '" + path.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    /// Writes the manifest once. An existing file must start with identical content; the trainer
    /// may have appended to it.
    void save(const fs::path& path) const {
        const std::string text = to_text();
        if (fs::exists(path)) {
            std::ifstream in(path);
            std::stringstream ss;
            ss << in.rdbuf();
            if (ss.str().compare(0, text.size(), text) != 0) {
                throw ExperimentError("manifest '" + path.string() + "' already exists with different content");
            }
            return;
        }
        std::ofstream out(path);
        if (!out) throw ExperimentError("cannot write manifest '" + path.string() + "'");
        out << text;
    }

    /// Every input path must exist before the trainer is started.
    void validate() const {
        auto need = [&](const fs::path& p, const char* what) {
            if (!fs::exists(p)) {
                throw ExperimentError("manifest '" + name + "': " + what + " '" + p.string() + "' does not exist");
            }
        };
        need(images_dir, "images_dir");
        need(masks_dir, "masks_dir");
        need(split_file, "split_file");
        if (!is_train()) need(weights, "weights");
        if (epochs < 1 || batch_size < 1 || patience < 1) throw ExperimentError("manifest '" + name + "': bad hyperparameters");
        if (beta < 0.0 || beta > 1.0) throw ExperimentError("manifest '" + name + "': beta outside [0,1]");
    }
};

/// Where a dataset's arm lives on disk.
struct DatasetPaths {
    std::string name;
    fs::path original_images;
    fs::path pca_images;
    fs::path masks;
    fs::path split_file;

    const fs::path& images(Arm arm) const { return arm == Arm::original ? original_images : pca_images; }
};

struct TrainerSettings {
    int epochs = 100;
    int batch_size = 8;
    int patience = 10;
    double beta = 0.5;
    std::uint64_t seed = 42;
};

struct PlanOptions {
    fs::path runs_dir = "runs";
    TrainerSettings trainer;
    /// Which part of an external dataset is predicted: "all" or "test".
    std::string external_subset = "all";
};

struct ExperimentPlan {
    std::vector<RunManifest> train;      // one per (dataset, arm)
    std::vector<RunManifest> inference;  // one per external (model, dataset, arm)
};

inline std::string train_run_name(Arm arm, const std::string& dataset) {
    return "train_" + std::string(to_string(arm)) + "_" + dataset;
}

inline std::string inference_run_name(Arm arm, const std::string& model, const std::string& dataset) {
    return "infer_" + std::string(to_string(arm)) + "_" + model + "_on_" + dataset;
}

inline ExperimentPlan plan_experiment(const std::vector<DatasetPaths>& datasets, const PlanOptions& opts = {}) {
    if (datasets.size() < 2) {
        throw ExperimentError("the cross-dataset protocol needs at least 2 datasets, got " +
                              std::to_string(datasets.size()));
    }
    std::set<std::string> names;
    for (const auto& d : datasets) {
        if (d.name.empty()) throw ExperimentError("dataset with an empty name");
        if (!names.insert(d.name).second) throw ExperimentError("duplicate dataset name '" + d.name + "'");
    }
    if (opts.external_subset != "all" && opts.external_subset != "test") {
        throw ExperimentError("external_subset must be 'all' or 'test'");
    }

    auto base = [&](const std::string& name, Arm arm, const DatasetPaths& model, const DatasetPaths& data) {
        RunManifest m;
        m.name = name;
        m.arm = arm;
        m.train_dataset = model.name;
        m.eval_dataset = data.name;
        m.images_dir = data.images(arm);
        m.masks_dir = data.masks;
        m.split_file = data.split_file;
        m.epochs = opts.trainer.epochs;
        m.batch_size = opts.trainer.batch_size;
        m.patience = opts.trainer.patience;
        m.beta = opts.trainer.beta;
        m.seed = opts.trainer.seed;
        const fs::path run = opts.runs_dir / name;
        m.out_predictions = run / "predictions";
        m.out_log = run / "log.csv";
        return m;
    };

    ExperimentPlan plan;
    for (Arm arm : kArms) {
        for (const auto& d : datasets) {
            RunManifest m = base(train_run_name(arm, d.name), arm, d, d);
            m.mode = "train";
            m.predict_subset = "test";
            m.out_weights = opts.runs_dir / m.name / "weights.bin";
            plan.train.push_back(std::move(m));
        }
    }
    for (Arm arm : kArms) {
        for (const auto& model : datasets) {
            for (const auto& data : datasets) {
                if (model.name == data.name) continue;
                RunManifest m = base(inference_run_name(arm, model.name, data.name), arm, model, data);
                m.mode = "predict";
                m.predict_subset = opts.external_subset;
                m.weights = opts.runs_dir / train_run_name(arm, model.name) / "weights.bin";
                plan.inference.push_back(std::move(m));
            }
        }
    }
    return plan;
}

}  // namespace pcaharm
