#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pcaharm/common.hpp"
#include "pcaharm/image.hpp"
#include "pcaharm/ingest.hpp"

namespace pcaharm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-dataset PCA fit.
///
/// Row j of the data is recovered as `mean + sum_i scores(j, i) * components.row(i)`; with all
/// `k_max` components this is exact up to rounding. Eigenvalues are those of the sample
/// covariance (divisor n - 1), sorted descending and clamped to be non-negative.
struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::VectorXd eigenvalues;
    RowMatrix components;  // k_max x d, orthonormal rows
    RowMatrix scores;      // n x k_max
    std::size_t n_samples = 0;

    std::size_t dims() const { return static_cast<std::size_t>(mean.size()); }
    std::size_t k_max() const { return static_cast<std::size_t>(eigenvalues.size()); }
    std::span<const double> spectrum() const { return {eigenvalues.data(), k_max()}; }
};

enum class FitRoute {
    automatic,   // Gram matrix when n < d, covariance otherwise
    gram,        // n x n inner products, eigenvectors mapped back to pixel space
    covariance,  // d x d covariance
};

namespace detail {

inline Eigen::Map<const RowMatrix> as_eigen(const DataMatrix& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

/// Eigenvalues at or below this are rounding noise: relative to the top eigenvalue, with an absolute
/// term scaled by the raw data magnitude for data whose centered spread is itself at rounding level.
inline double noise_floor(double top, double scale, double n, double d) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    return std::max(top * std::max(n, d) * eps * 16, 16.0 * n * d * eps * eps * scale * scale);
}

/// Orthonormalises the rows of `w` in order (two passes of modified Gram-Schmidt). Rows flagged in
/// `replace`, or rows that collapse numerically, are replaced by the first standard basis vector
/// that is independent of the rows before them.
inline void orthonormalize_rows(RowMatrix& w, const std::vector<bool>& replace) {
    const Eigen::Index k = w.rows();
    const Eigen::Index d = w.cols();
    Eigen::Index next_basis = 0;
    auto project_out = [&](Eigen::VectorXd& v, Eigen::Index upto) {
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index j = 0; j < upto; ++j) v -= w.row(j).dot(v) * w.row(j).transpose();
        }
    };
    for (Eigen::Index i = 0; i < k; ++i) {
        Eigen::VectorXd v = w.row(i).transpose();
        double norm = 0.0;
        if (!replace[static_cast<std::size_t>(i)]) {
            project_out(v, i);
            norm = v.norm();
        }
        if (norm < 1e-6) {
            for (; next_basis < d; ++next_basis) {
                v = Eigen::VectorXd::Unit(d, next_basis);
                project_out(v, i);
                norm = v.norm();
                if (norm > 0.5) break;
            }
            if (norm <= 0.5) throw PcaError("cannot complete an orthonormal basis");
            ++next_basis;
        }
        w.row(i) = (v / norm).transpose();
    }
}

/// Makes the largest-magnitude entry of every row positive (first index wins ties).
inline void fix_signs(RowMatrix& w) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            double a = std::abs(w(i, j));
            if (a > best_abs) {
                best_abs = a;
                best = j;
            }
        }
        if (w(i, best) < 0) w.row(i) *= -1.0;
    }
}

}  // namespace detail

inline PcaModel fit_pca(const DataMatrix& x, FitRoute route = FitRoute::automatic) {
    const std::size_t n = x.rows;
    const std::size_t d = x.cols;
    if (n < 2) throw PcaError("PCA needs at least 2 samples, got " + std::to_string(n));
    if (d < 1) throw PcaError("PCA needs at least 1 feature");
    if (x.data.size() != n * d) throw PcaError("data matrix size does not match its shape");
    for (double v : x.data) {
        if (!std::isfinite(v)) throw PcaError("PCA input contains non-finite entries");
    }
    if (route == FitRoute::automatic) route = n < d ? FitRoute::gram : FitRoute::covariance;

    const auto X = detail::as_eigen(x);
    PcaModel model;
    model.n_samples = n;
    model.mean = X.colwise().mean().transpose();
    const RowMatrix centered = X.rowwise() - model.mean.transpose();
    const double dof = static_cast<double>(n - 1);
    const double scale = X.cwiseAbs().maxCoeff();
    const double n_d = static_cast<double>(n), d_d = static_cast<double>(d);
    const auto k_max = static_cast<Eigen::Index>(std::min(n - 1, d));

    Eigen::VectorXd lambda(k_max);
    RowMatrix w(k_max, static_cast<Eigen::Index>(d));
    std::vector<bool> replace(static_cast<std::size_t>(k_max), false);

    if (route == FitRoute::gram) {
        Eigen::MatrixXd gram = centered * centered.transpose();
        gram /= dof;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        if (solver.info() != Eigen::Success) throw PcaError("Gram eigendecomposition failed");
        const auto& evals = solver.eigenvalues();  // ascending
        const double tol = detail::noise_floor(std::max(evals(evals.size() - 1), 0.0), scale, n_d, d_d);
        for (Eigen::Index i = 0; i < k_max; ++i) {
            const Eigen::Index src = evals.size() - 1 - i;
            lambda(i) = evals(src);
            if (lambda(i) <= tol) {
                replace[static_cast<std::size_t>(i)] = true;
                w.row(i).setZero();
                continue;
            }
            Eigen::VectorXd back = centered.transpose() * solver.eigenvectors().col(src);
            w.row(i) = (back / back.norm()).transpose();
        }
    } else {
        Eigen::MatrixXd cov = centered.transpose() * centered;
        cov /= dof;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        if (solver.info() != Eigen::Success) throw PcaError("covariance eigendecomposition failed");
        const auto& evals = solver.eigenvalues();
        for (Eigen::Index i = 0; i < k_max; ++i) {
            const Eigen::Index src = evals.size() - 1 - i;
            lambda(i) = evals(src);
            w.row(i) = solver.eigenvectors().col(src).transpose();
        }
    }
    const double floor = detail::noise_floor(std::max(lambda.size() ? lambda(0) : 0.0, 0.0), scale, n_d, d_d);
    for (auto& l : lambda) {
        if (l <= floor) l = 0.0;
    }

    detail::orthonormalize_rows(w, replace);
    detail::fix_signs(w);
    for (auto& l : lambda) l = std::max(l, 0.0);

    model.eigenvalues = std::move(lambda);
    model.components = std::move(w);
    model.scores = centered * model.components.transpose();
    return model;
}

/// Scores of arbitrary rows against a fitted model.
inline RowMatrix project(const PcaModel& model, const DataMatrix& x) {
    if (x.cols != model.dims()) throw PcaError("projection input width does not match the model");
    const RowMatrix centered = detail::as_eigen(x).rowwise() - model.mean.transpose();
    return centered * model.components.transpose();
}

namespace detail {

inline void check_k(const PcaModel& model, std::size_t k) {
    if (k < 1 || k > model.k_max()) {
        throw PcaError("component count " + std::to_string(k) + " outside [1, " + std::to_string(model.k_max()) + "]");
    }
}

inline DataMatrix combine(const PcaModel& model, const RowMatrix& scores, std::size_t k, bool clamp) {
    const auto kk = static_cast<Eigen::Index>(k);
    RowMatrix out = scores.leftCols(kk) * model.components.topRows(kk);
    out.rowwise() += model.mean.transpose();
    DataMatrix m(static_cast<std::size_t>(out.rows()), model.dims());
    std::copy(out.data(), out.data() + out.size(), m.data.begin());
    if (clamp) {
        for (auto& v : m.data) v = std::clamp(v, 0.0, 1.0);
    }
    return m;
}

}  // namespace detail

/// Mean plus the first k score-weighted components, for every fitted sample.
/// Unclamped; see reconstruct() for the image-range version.
inline DataMatrix reconstruct_raw(const PcaModel& model, std::size_t k) {
    detail::check_k(model, k);
    return detail::combine(model, model.scores, k, false);
}

inline DataMatrix reconstruct(const PcaModel& model, std::size_t k) {
    detail::check_k(model, k);
    return detail::combine(model, model.scores, k, true);
}

/// Reconstructs rows that need not have been part of the fit.
inline DataMatrix reconstruct_rows(const PcaModel& model, const DataMatrix& x, std::size_t k, bool clamp = true) {
    detail::check_k(model, k);
    DataMatrix out = detail::combine(model, project(model, x), k, clamp);
    out.row_ids = x.row_ids;
    return out;
}

// ---------------------------------------------------------------------------
// Component selection

inline void check_descending(std::span<const double> eigenvalues) {
    if (eigenvalues.empty()) throw PcaError("empty eigenvalue spectrum");
    for (std::size_t i = 1; i < eigenvalues.size(); ++i) {
        if (eigenvalues[i] > eigenvalues[i - 1]) throw PcaError("eigenvalues must be sorted descending");
    }
}

/// Number of eigenvalues strictly above `threshold`, at least 1.
inline std::size_t kaiser_guttman(std::span<const double> eigenvalues, double threshold = 1.0) {
    check_descending(eigenvalues);
    auto k = static_cast<std::size_t>(
        std::count_if(eigenvalues.begin(), eigenvalues.end(), [&](double l) { return l > threshold; }));
    return std::max<std::size_t>(k, 1);
}

inline double cumulative_explained_variance(std::span<const double> eigenvalues, std::size_t k) {
    check_descending(eigenvalues);
    if (k < 1 || k > eigenvalues.size()) throw PcaError("component count out of range");
    double total = 0.0;
    for (double l : eigenvalues) total += l;
    if (!(total > 0.0)) throw PcaError("cannot compute explained variance of an all-zero spectrum");
    double head = 0.0;
    for (std::size_t i = 0; i < k; ++i) head += eigenvalues[i];
    return head / total;
}

enum class SelectionCriterion { kaiser_guttman, variance_target, manual };

inline const char* to_string(SelectionCriterion c) {
    switch (c) {
    case SelectionCriterion::kaiser_guttman: return "kaiser-guttman";
    case SelectionCriterion::variance_target: return "variance-target";
    case SelectionCriterion::manual: return "manual";
    }
    return "?";
}

struct SelectionPolicy {
    SelectionCriterion criterion = SelectionCriterion::kaiser_guttman;
    double eigen_threshold = 1.0;
    double variance_target = 0.9;
    std::size_t manual_k = 0;  // 0 with manual means k_max

    /// Parses `kaiser`, `kaiser:<threshold>`, `variance:<fraction>`, `manual:<k>`, `auto` or a bare integer.
    static SelectionPolicy parse(const std::string& text) {
        SelectionPolicy p;
        auto colon = text.find(':');
        std::string head = text.substr(0, colon);
        std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
        try {
            if (head == "auto" || head == "kaiser" || head == "kaiser-guttman") {
                p.criterion = SelectionCriterion::kaiser_guttman;
                if (!arg.empty()) p.eigen_threshold = std::stod(arg);
            } else if (head == "variance") {
                p.criterion = SelectionCriterion::variance_target;
                if (!arg.empty()) p.variance_target = std::stod(arg);
            } else if (head == "manual") {
                p.criterion = SelectionCriterion::manual;
                p.manual_k = arg.empty() ? 0 : std::stoul(arg);
            } else if (!head.empty() && std::all_of(head.begin(), head.end(), ::isdigit)) {
                p.criterion = SelectionCriterion::manual;
                p.manual_k = std::stoul(head);
                if (p.manual_k == 0) throw PcaError("manual component count must be >= 1");
            } else {
                throw PcaError("unknown selection policy '" + text + "'");
            }
        } catch (const std::logic_error&) {
            throw PcaError("malformed selection policy '" + text + "'");
        }
        return p;
    }
};

struct ComponentSelection {
    std::size_t k = 1;
    SelectionCriterion criterion = SelectionCriterion::kaiser_guttman;
    double threshold = 1.0;
    double achieved_variance = 1.0;
};

/// Applies the policy and reports the explained variance of the chosen k. A warning is logged
/// when that variance falls outside [0.85, 0.95].
inline ComponentSelection select_components(const PcaModel& model, const SelectionPolicy& policy) {
    const auto spectrum = model.spectrum();
    check_descending(spectrum);
    double total = 0.0;
    for (double l : spectrum) total += l;

    ComponentSelection sel;
    sel.criterion = policy.criterion;
    switch (policy.criterion) {
    case SelectionCriterion::kaiser_guttman:
        sel.threshold = policy.eigen_threshold;
        sel.k = kaiser_guttman(spectrum, policy.eigen_threshold);
        break;
    case SelectionCriterion::variance_target: {
        sel.threshold = policy.variance_target;
        sel.k = spectrum.size();
        if (total > 0.0) {
            double head = 0.0;
            for (std::size_t i = 0; i < spectrum.size(); ++i) {
                head += spectrum[i];
                if (head / total >= policy.variance_target - 1e-12) {
                    sel.k = i + 1;
                    break;
                }
            }
        } else {
            sel.k = 1;
        }
        break;
    }
    case SelectionCriterion::manual:
        sel.threshold = 0.0;
        sel.k = policy.manual_k == 0 ? spectrum.size() : policy.manual_k;
        detail::check_k(model, sel.k);
        break;
    }
    // A zero spectrum has nothing left to explain.
    sel.achieved_variance = total > 0.0 ? cumulative_explained_variance(spectrum, sel.k) : 1.0;
    if (sel.achieved_variance < 0.85 || sel.achieved_variance > 0.95) {
        std::ostringstream msg;
        msg << "selected k=" << sel.k << " (" << to_string(sel.criterion) << ") explains "
            << sel.achieved_variance * 100.0 << "% of the variance, outside the expected 85-95% band";
        log::warn(msg.str());
    }
    return sel;
}

// ---------------------------------------------------------------------------
// Scree data

struct ScreeRow {
    std::size_t index = 0;  // 1-based
    double eigenvalue = 0.0;
    double cumulative_variance = 0.0;
};

/// For an all-zero spectrum every row reports cumulative variance 1.
inline std::vector<ScreeRow> scree_export(const PcaModel& model) {
    if (model.k_max() == 0) throw PcaError("scree export needs a fitted model");
    const auto spectrum = model.spectrum();
    double total = 0.0;
    for (double l : spectrum) total += l;
    std::vector<ScreeRow> rows;
    rows.reserve(spectrum.size());
    double running = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        running += spectrum[i];
        rows.push_back({i + 1, spectrum[i], total > 0.0 ? std::min(running / total, 1.0) : 1.0});
    }
    rows.back().cumulative_variance = 1.0;
    return rows;
}

inline void write_scree_csv(std::ostream& out, const std::vector<ScreeRow>& rows) {
    out << "component,eigenvalue,cumulative_variance\n";
    out.precision(17);
    for (const auto& r : rows) out << r.index << ',' << r.eigenvalue << ',' << r.cumulative_variance << '\n';
}

inline void write_scree_csv(const std::filesystem::path& path, const std::vector<ScreeRow>& rows) {
    std::ofstream out(path);
    if (!out) throw PcaError("cannot write '" + path.string() + "'");
    write_scree_csv(out, rows);
}

// ---------------------------------------------------------------------------
// UPM1 model files

inline constexpr std::array<char, 4> kUpmMagic{'U', 'P', 'M', '1'};
inline constexpr std::uint32_t kUpmVersion = 1;

inline void save_model(const std::filesystem::path& path, const PcaModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PcaError("cannot write '" + path.string() + "'");
    out.write(kUpmMagic.data(), kUpmMagic.size());
    io::write_le<std::uint32_t>(out, kUpmVersion);
    io::write_le<std::uint64_t>(out, model.n_samples);
    io::write_le<std::uint64_t>(out, model.dims());
    io::write_le<std::uint64_t>(out, model.k_max());
    for (Eigen::Index i = 0; i < model.mean.size(); ++i) io::write_le<double>(out, model.mean(i));
    for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) io::write_le<double>(out, model.eigenvalues(i));
    for (Eigen::Index i = 0; i < model.components.size(); ++i) io::write_le<double>(out, model.components.data()[i]);
    for (Eigen::Index i = 0; i < model.scores.size(); ++i) io::write_le<double>(out, model.scores.data()[i]);
    if (!out) throw PcaError("failed writing '" + path.string() + "'");
}

inline PcaModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PcaError("cannot read '" + path.string() + "'");
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kUpmMagic) throw PcaError("'" + path.string() + "' is not a UPM1 model");
    if (auto v = io::read_le<std::uint32_t>(in); v != kUpmVersion) {
        throw PcaError("unsupported UPM version " + std::to_string(v));
    }
    PcaModel m;
    m.n_samples = io::read_le<std::uint64_t>(in);
    const auto d = static_cast<Eigen::Index>(io::read_le<std::uint64_t>(in));
    const auto k = static_cast<Eigen::Index>(io::read_le<std::uint64_t>(in));
    const auto n = static_cast<Eigen::Index>(m.n_samples);
    m.mean.resize(d);
    m.eigenvalues.resize(k);
    m.components.resize(k, d);
    m.scores.resize(n, k);
    for (Eigen::Index i = 0; i < d; ++i) m.mean(i) = io::read_le<double>(in);
    for (Eigen::Index i = 0; i < k; ++i) m.eigenvalues(i) = io::read_le<double>(in);
    for (Eigen::Index i = 0; i < k * d; ++i) m.components.data()[i] = io::read_le<double>(in);
    for (Eigen::Index i = 0; i < n * k; ++i) m.scores.data()[i] = io::read_le<double>(in);
    return m;
}

// ---------------------------------------------------------------------------
// Dataset harmonisation

struct HarmonizeOptions {
    SelectionPolicy policy;
    /// Fit only on these ids (e.g. the training split); all records are still reconstructed.
    std::optional<std::vector<std::string>> fit_ids;
};

struct HarmonizeResult {
    std::vector<DatasetRecord> records;
    PcaModel model;
    ComponentSelection selection;
};

/// Replaces every image by its PCA reconstruction, clamped to [0,1] and quantised to 8 bits.
/// Masks and ids pass through unchanged.
inline HarmonizeResult harmonize_dataset(const std::vector<DatasetRecord>& records, const HarmonizeOptions& opts = {}) {
    if (records.size() < 2) throw PcaError("harmonisation needs at least 2 records");
    const std::size_t w = records.front().image.width;
    const std::size_t h = records.front().image.height;
    const DataMatrix all = flatten(records, Channel::images);

    HarmonizeResult result;
    DataMatrix rebuilt;
    if (opts.fit_ids) {
        std::set<std::string> keep(opts.fit_ids->begin(), opts.fit_ids->end());
        std::vector<DatasetRecord> subset;
        for (const auto& r : records) {
            if (keep.count(r.id)) subset.push_back(r);
        }
        result.model = fit_pca(flatten(subset, Channel::images));
        result.selection = select_components(result.model, opts.policy);
        rebuilt = reconstruct_rows(result.model, all, result.selection.k, true);
    } else {
        result.model = fit_pca(all);
        result.selection = select_components(result.model, opts.policy);
        rebuilt = reconstruct(result.model, result.selection.k);
    }

    result.records.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        result.records.push_back({records[i].id, quantized(unflatten_row(rebuilt, i, w, h)), records[i].mask});
    }
    std::ostringstream msg;
    msg << "PCA harmonisation: k=" << result.selection.k << " of " << result.model.k_max() << " ("
        << to_string(result.selection.criterion) << "), explained variance " << result.selection.achieved_variance;
    log::info(msg.str());
    return result;
}

}  // namespace pcaharm
