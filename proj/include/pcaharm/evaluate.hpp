#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pcaharm/experiment.hpp"
#include "pcaharm/ingest.hpp"
#include "pcaharm/metrics.hpp"

namespace pcaharm {

struct ImageScore {
    std::string id;
    SegmentationScores scores;
};

struct EvaluateOptions {
    std::string gt_pattern = "{id}.png";
    double threshold = 0.5;
};

/// Scores probability-map PNGs `<pred_dir>/<id>.png` against ground-truth masks.
///
/// With `ids` the prediction directory must hold exactly those ids; without it every PNG in the
/// directory is scored. Results are sorted by id.
inline std::vector<ImageScore> evaluate_predictions(const fs::path& pred_dir, const fs::path& gt_dir,
                                                    const std::optional<std::vector<std::string>>& ids = std::nullopt,
                                                    const EvaluateOptions& opts = {}) {
    if (!fs::is_directory(pred_dir)) throw ExperimentError("prediction directory '" + pred_dir.string() + "' is missing");
    std::set<std::string> found;
    for (const auto& entry : fs::directory_iterator(pred_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") found.insert(entry.path().stem().string());
    }
    std::vector<std::string> wanted;
    if (ids) {
        std::set<std::string> expected(ids->begin(), ids->end());
        std::vector<std::string> missing, extra;
        std::set_difference(expected.begin(), expected.end(), found.begin(), found.end(), std::back_inserter(missing));
        std::set_difference(found.begin(), found.end(), expected.begin(), expected.end(), std::back_inserter(extra));
        if (!missing.empty() || !extra.empty()) {
            std::string msg = "prediction ids in '" + pred_dir.string() + "' do not match the ground truth:";
            for (const auto& m : missing) msg += " missing " + m + ";";
            for (const auto& x : extra) msg += " unexpected " + x + ";";
            throw ExperimentError(msg);
        }
        wanted.assign(expected.begin(), expected.end());
    } else {
        wanted.assign(found.begin(), found.end());
    }

    std::vector<ImageScore> out;
    out.reserve(wanted.size());
    for (const auto& id : wanted) {
        const fs::path gt_path = gt_dir / detail::substitute_id(opts.gt_pattern, id);
        if (!fs::exists(gt_path)) {
            throw ExperimentError("prediction '" + id + "' has no ground truth at '" + gt_path.string() + "'");
        }
        const Mask pred = binarize(load_image(pred_dir / (id + ".png")), opts.threshold);
        const Mask gt = load_mask(gt_path);
        if (!same_shape(pred, gt)) throw ExperimentError("prediction '" + id + "' differs in size from its ground truth");
        out.push_back({id, score(pred, gt)});
    }
    return out;
}

inline void write_image_scores_csv(const fs::path& path, const std::vector<ImageScore>& scores) {
    std::ofstream out(path);
    if (!out) throw ExperimentError("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "id,recall,precision,dice,degenerate\n";
    for (const auto& s : scores) {
        out << s.id << ',' << s.scores.recall << ',' << s.scores.precision << ',' << s.scores.dice << ','
            << (s.scores.degenerate ? 1 : 0) << '\n';
    }
}

/// Per-image mean over images with non-empty ground truth.
inline SegmentationScores aggregate(const std::vector<ImageScore>& scores, std::size_t* used = nullptr) {
    if (scores.empty()) throw MetricsError("cannot aggregate an empty list of predictions");
    double r = 0.0, p = 0.0, d = 0.0;
    std::size_t n = 0;
    for (const auto& s : scores) {
        if (s.scores.degenerate) continue;
        r += s.scores.recall;
        p += s.scores.precision;
        d += s.scores.dice;
        ++n;
    }
    if (n == 0) throw MetricsError("every image has empty ground truth; nothing to aggregate");
    if (used) *used = n;
    const double k = static_cast<double>(n);
    return {r / k, p / k, d / k, false};
}

/// Where to find the predictions and ground truth of one table cell.
struct CellSource {
    PairKey key;
    fs::path pred_dir;
    fs::path gt_dir;
    std::optional<std::vector<std::string>> ids;
};

/// Scores every cell. All missing prediction directories are reported together.
inline ExperimentTable collect_results(const std::vector<std::string>& datasets, const std::vector<CellSource>& cells,
                                       const std::function<void(const CellSource&, const std::vector<ImageScore>&)>&
                                           on_cell = {}) {
    std::string missing;
    for (const auto& c : cells) {
        if (!fs::is_directory(c.pred_dir)) missing += "\n  " + describe(c.key) + " (" + c.pred_dir.string() + ")";
    }
    if (!missing.empty()) throw ExperimentError("incomplete table, no predictions for:" + missing);

    ExperimentTable table(datasets);
    for (const auto& c : cells) {
        const auto scores = evaluate_predictions(c.pred_dir, c.gt_dir, c.ids);
        std::size_t used = 0;
        const SegmentationScores mean = aggregate(scores, &used);
        table.set({c.key.train_dataset, c.key.eval_dataset, c.key.arm, mean.recall, mean.dice, mean.precision, used});
        if (on_cell) on_cell(c, scores);
    }
    return table;
}

}  // namespace pcaharm
