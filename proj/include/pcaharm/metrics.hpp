#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pcaharm/common.hpp"
#include "pcaharm/image.hpp"

namespace pcaharm {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// A ratio together with a flag telling whether its denominator was zero.
struct Ratio {
    double value = 0.0;
    bool degenerate = false;
};

struct SegmentationScores {
    double recall = 0.0;
    double precision = 0.0;
    double dice = 0.0;
    /// Ground truth has no foreground (recall and dice fall back to their conventions).
    bool degenerate = false;
};

struct LossConfig {
    double beta = 0.5;
    double smooth = 1.0;
};

inline constexpr double kBceClip = 1e-7;

inline Mask binarize(const Image& prob, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw MetricsError("binarization threshold must lie in (0,1)");
    Mask out(prob.width, prob.height);
    for (std::size_t i = 0; i < prob.size(); ++i) out.values[i] = prob.values[i] >= threshold ? 1 : 0;
    return out;
}

inline ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
    if (!same_shape(pred, gt) || pred.size() != gt.size()) {
        throw MetricsError("prediction and ground truth differ in size");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.values[i] != 0;
        const bool g = gt.values[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

/// tp / (tp + fn); 1.0 (degenerate) when there is no ground-truth foreground.
inline Ratio recall(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return {1.0, true};
    return {static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn), false};
}

/// tp / (tp + fp). With nothing predicted it is 1.0 on empty ground truth, 0.0 otherwise (degenerate).
inline Ratio precision(const ConfusionCounts& c) {
    if (c.tp + c.fp == 0) return {c.fn == 0 ? 1.0 : 0.0, true};
    return {static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp), false};
}

/// 2tp / (2tp + fp + fn); 1.0 (degenerate) when both masks are empty.
inline Ratio dice(const ConfusionCounts& c) {
    const auto denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return {1.0, true};
    return {2.0 * static_cast<double>(c.tp) / static_cast<double>(denom), false};
}

inline Ratio dice(const Mask& pred, const Mask& gt) { return dice(confusion(pred, gt)); }

inline SegmentationScores score(const ConfusionCounts& c) {
    return {recall(c).value, precision(c).value, dice(c).value, c.tp + c.fn == 0};
}

inline SegmentationScores score(const Mask& pred, const Mask& gt) { return score(confusion(pred, gt)); }

inline double soft_dice_loss(const Image& prob, const Mask& gt, double smooth) {
    double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = prob.values[i];
        const double g = gt.values[i];
        inter += p * g;
        sum_p += p;
        sum_g += g;
    }
    const double denom = sum_p + sum_g + smooth;
    if (denom == 0.0) return 0.0;
    return 1.0 - (2.0 * inter + smooth) / denom;
}

inline double mean_bce(const Image& prob, const Mask& gt) {
    double acc = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = std::clamp<double>(prob.values[i], kBceClip, 1.0 - kBceClip);
        acc += gt.values[i] ? std::log(p) : std::log(1.0 - p);
    }
    return -acc / static_cast<double>(prob.size());
}

/// beta * soft Dice loss + (1 - beta) * mean binary cross-entropy.
inline double combined_loss(const Image& prob, const Mask& gt, const LossConfig& cfg = {}) {
    if (!same_shape(prob, gt) || prob.size() != gt.size()) {
        throw MetricsError("probability map and ground truth differ in size");
    }
    if (prob.size() == 0) throw MetricsError("combined loss of an empty image");
    if (cfg.beta < 0.0 || cfg.beta > 1.0) throw MetricsError("loss beta must lie in [0,1]");
    if (cfg.smooth < 0.0) throw MetricsError("loss smoothing must be non-negative");
    return cfg.beta * soft_dice_loss(prob, gt, cfg.smooth) + (1.0 - cfg.beta) * mean_bce(prob, gt);
}

struct DatasetScores {
    SegmentationScores mean;
    std::size_t images = 0;      // images in the aggregate
    std::size_t degenerate = 0;  // images skipped (or kept) because their ground truth is empty
};

/// Unweighted per-image mean. Images with empty ground truth are left out unless `keep_degenerate`.
inline DatasetScores dataset_scores(std::span<const std::pair<Mask, Mask>> pairs, bool keep_degenerate = false) {
    if (pairs.empty()) throw MetricsError("cannot aggregate an empty list of predictions");
    DatasetScores out;
    double r = 0.0, p = 0.0, d = 0.0;
    for (const auto& [pred, gt] : pairs) {
        SegmentationScores s = score(pred, gt);
        if (s.degenerate) {
            ++out.degenerate;
            if (!keep_degenerate) continue;
        }
        r += s.recall;
        p += s.precision;
        d += s.dice;
        ++out.images;
    }
    if (out.images == 0) throw MetricsError("every image has empty ground truth; nothing to aggregate");
    const auto n = static_cast<double>(out.images);
    out.mean = {r / n, p / n, d / n, false};
    return out;
}

}  // namespace pcaharm
