#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "pcaharm/common.hpp"
#include "pcaharm/ingest.hpp"
#include "pcaharm/metrics.hpp"
#include "pcaharm/stats.hpp"

namespace pcaharm {

enum class Arm { original, pca };

inline const char* to_string(Arm arm) { return arm == Arm::original ? "original" : "pca"; }

inline Arm parse_arm(const std::string& s) {
    if (s == "original" || s == "ori") return Arm::original;
    if (s == "pca") return Arm::pca;
    throw ExperimentError("unknown arm '" + s + "'");
}

inline constexpr Arm kArms[] = {Arm::original, Arm::pca};

/// One (evaluation dataset, training dataset, arm) cell.
struct PairKey {
    std::string eval_dataset;
    std::string train_dataset;
    Arm arm = Arm::original;

    bool external() const { return eval_dataset != train_dataset; }
    friend auto operator<=>(const PairKey&, const PairKey&) = default;
};

inline std::string describe(const PairKey& k) {
    return std::string(to_string(k.arm)) + " model trained on " + k.train_dataset + ", evaluated on " + k.eval_dataset;
}

struct PairResult {
    std::string train_dataset;
    std::string eval_dataset;
    Arm arm = Arm::original;
    double recall = 0.0;
    std::optional<double> dice;
    std::optional<double> precision;
    std::size_t images = 0;

    PairKey key() const { return {eval_dataset, train_dataset, arm}; }
};

/// The square evaluation matrix of both arms. Rows are evaluation datasets, columns training datasets.
class ExperimentTable {
public:
    ExperimentTable() = default;
    explicit ExperimentTable(std::vector<std::string> datasets) : datasets_(std::move(datasets)) {
        std::set<std::string> unique(datasets_.begin(), datasets_.end());
        if (unique.size() != datasets_.size()) throw ExperimentError("duplicate dataset names");
    }

    const std::vector<std::string>& datasets() const { return datasets_; }

    void set(const PairResult& r) {
        if (!has_dataset(r.train_dataset) || !has_dataset(r.eval_dataset)) {
            throw ExperimentError("result references an unknown dataset: " + describe(r.key()));
        }
        cells_[r.key()] = r;
    }

    const PairResult* find(const std::string& eval, const std::string& train, Arm arm) const {
        auto it = cells_.find({eval, train, arm});
        return it == cells_.end() ? nullptr : &it->second;
    }

    const PairResult& at(const std::string& eval, const std::string& train, Arm arm) const {
        const PairResult* r = find(eval, train, arm);
        if (!r) throw ExperimentError("missing cell: " + describe({eval, train, arm}));
        return *r;
    }

    double recall(const std::string& eval, const std::string& train, Arm arm) const {
        return at(eval, train, arm).recall;
    }

    /// PCA recall minus original recall of a cell.
    double diff(const std::string& eval, const std::string& train) const {
        return recall(eval, train, Arm::pca) - recall(eval, train, Arm::original);
    }

    std::vector<PairKey> missing(Arm arm) const {
        std::vector<PairKey> out;
        for (const auto& e : datasets_) {
            for (const auto& t : datasets_) {
                if (!find(e, t, arm)) out.push_back({e, t, arm});
            }
        }
        return out;
    }

    bool complete(Arm arm) const { return missing(arm).empty(); }

    void require_complete(Arm arm) const {
        auto gaps = missing(arm);
        if (gaps.empty()) return;
        std::string msg = "incomplete " + std::string(to_string(arm)) + " arm, missing:";
        for (const auto& g : gaps) msg += "\n  " + describe(g);
        throw ExperimentError(msg);
    }

    const std::map<PairKey, PairResult>& cells() const { return cells_; }

private:
    bool has_dataset(const std::string& name) const {
        return std::find(datasets_.begin(), datasets_.end(), name) != datasets_.end();
    }

    std::vector<std::string> datasets_;
    std::map<PairKey, PairResult> cells_;
};

// ---------------------------------------------------------------------------
// Results CSV (the hand-off between the evaluate and report stages)

inline void write_results_csv(std::ostream& out, const ExperimentTable& table) {
    out << "train_dataset,eval_dataset,arm,recall,dice,precision,images\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (Arm arm : kArms) {
        for (const auto& e : table.datasets()) {
            for (const auto& t : table.datasets()) {
                const PairResult* r = table.find(e, t, arm);
                if (!r) continue;
                out << r->train_dataset << ',' << r->eval_dataset << ',' << to_string(arm) << ',' << num(r->recall)
                    << ',' << (r->dice ? num(*r->dice) : "") << ',' << (r->precision ? num(*r->precision) : "") << ','
                    << r->images << '\n';
            }
        }
    }
}

inline void write_results_csv(const std::filesystem::path& path, const ExperimentTable& table) {
    std::ofstream out(path);
    if (!out) throw ExperimentError("cannot write '" + path.string() + "'");
    write_results_csv(out, table);
}

/// Dataset order is the order of first appearance of evaluation datasets.
inline ExperimentTable read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ExperimentError("cannot read results '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("train_dataset,eval_dataset,arm,recall", 0) != 0) {
        throw ExperimentError("'" + path.string() + "' is not a results CSV");
    }
    std::vector<PairResult> rows;
    std::vector<std::string> order;
    auto note = [&](const std::string& name) {
        if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() < 4) throw ExperimentError("malformed results line '" + line + "'");
        f.resize(7);
        PairResult r;
        r.train_dataset = f[0];
        r.eval_dataset = f[1];
        r.arm = parse_arm(f[2]);
        try {
            r.recall = std::stod(f[3]);
            if (!f[4].empty()) r.dice = std::stod(f[4]);
            if (!f[5].empty()) r.precision = std::stod(f[5]);
            if (!f[6].empty()) r.images = std::stoul(f[6]);
        } catch (const std::logic_error&) {
            throw ExperimentError("malformed number in results line '" + line + "'");
        }
        note(r.eval_dataset);
        rows.push_back(std::move(r));
    }
    for (const auto& r : rows) note(r.train_dataset);
    ExperimentTable table(order);
    for (const auto& r : rows) table.set(r);
    return table;
}

// ---------------------------------------------------------------------------
// Declines and strata

/// Which in-domain recall an external cell is compared against.
enum class DeclineReference {
    row,     // native model of the evaluation dataset on its own data
    column,  // the external model on its own training dataset
};

struct DeclineRecord {
    std::string eval_dataset;
    std::string train_dataset;
    Arm arm = Arm::original;
    double in_domain_recall = 0.0;
    double external_recall = 0.0;
    double decline = 0.0;
};

inline std::vector<DeclineRecord> compute_declines(const ExperimentTable& table, Arm arm,
                                                   DeclineReference ref = DeclineReference::row) {
    for (const auto& name : table.datasets()) {
        if (!table.find(name, name, arm)) {
            throw ExperimentError("incomplete diagonal: no in-domain " + std::string(to_string(arm)) + " result for " +
                                  name);
        }
    }
    std::vector<DeclineRecord> out;
    for (const auto& e : table.datasets()) {
        for (const auto& t : table.datasets()) {
            if (e == t) continue;
            DeclineRecord d{e, t, arm, 0.0, table.recall(e, t, arm), 0.0};
            d.in_domain_recall = ref == DeclineReference::row ? table.recall(e, e, arm) : table.recall(t, t, arm);
            d.decline = d.in_domain_recall - d.external_recall;
            out.push_back(std::move(d));
        }
    }
    return out;
}

inline double mean_decline(const std::vector<DeclineRecord>& declines) {
    if (declines.empty()) throw ExperimentError("no external pairs");
    double s = 0.0;
    for (const auto& d : declines) s += d.decline;
    return s / static_cast<double>(declines.size());
}

/// The k pairs with the largest decline, largest first. Declines are compared on a 1e-9 grid so
/// that rounded table values which are equal on paper tie; ties go to (eval, train) name order.
inline std::vector<PairKey> worst_k(const std::vector<DeclineRecord>& declines, std::size_t k = 10) {
    if (k > declines.size()) {
        throw ExperimentError("worst_k: asked for " + std::to_string(k) + " pairs but only " +
                              std::to_string(declines.size()) + " are available");
    }
    std::vector<const DeclineRecord*> order;
    for (const auto& d : declines) order.push_back(&d);
    auto grid = [](double v) { return std::llround(v * 1e9); };
    std::sort(order.begin(), order.end(), [&](const DeclineRecord* a, const DeclineRecord* b) {
        const auto ga = grid(a->decline);
        const auto gb = grid(b->decline);
        if (ga != gb) return ga > gb;
        return std::tie(a->eval_dataset, a->train_dataset) < std::tie(b->eval_dataset, b->train_dataset);
    });
    std::vector<PairKey> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({order[i]->eval_dataset, order[i]->train_dataset, order[i]->arm});
    return out;
}

// ---------------------------------------------------------------------------
// Original-vs-PCA comparison per stratum

struct MetricComparison {
    stats::SampleSummary original;
    stats::SampleSummary pca;
    /// Paired two-tailed test of PCA against original; empty when the differences have no variance.
    std::optional<stats::TestResult> test;
};

struct Stratum {
    std::string name;
    std::vector<PairKey> pairs;  // keys carry the original arm
    MetricComparison recall;
    std::optional<MetricComparison> dice;
};

struct Table3Report {
    std::vector<Stratum> strata;
    std::size_t worst = 0;
};

namespace detail {

inline MetricComparison compare(const std::vector<double>& ori, const std::vector<double>& pca) {
    MetricComparison c{stats::summarize(ori), stats::summarize(pca), std::nullopt};
    if (ori.size() >= 2) {
        try {
            c.test = stats::paired_t_test(ori, pca);
        } catch (const DegenerateTestError&) {
            log::warn("paired t-test is degenerate (all differences equal); p-value not reported");
        }
    }
    return c;
}

inline Stratum make_stratum(const ExperimentTable& table, std::string name, std::vector<PairKey> pairs) {
    Stratum s{std::move(name), std::move(pairs), {}, std::nullopt};
    std::vector<double> ro, rp, dori, dpca;
    bool have_dice = true;
    for (const auto& k : s.pairs) {
        const PairResult& o = table.at(k.eval_dataset, k.train_dataset, Arm::original);
        const PairResult& p = table.at(k.eval_dataset, k.train_dataset, Arm::pca);
        ro.push_back(o.recall);
        rp.push_back(p.recall);
        if (o.dice && p.dice) {
            dori.push_back(*o.dice);
            dpca.push_back(*p.dice);
        } else {
            have_dice = false;
        }
    }
    s.recall = compare(ro, rp);
    if (have_dice && !dori.empty()) s.dice = compare(dori, dpca);
    return s;
}

}  // namespace detail

/// "All pairs", "Worst <k>" and "Other <rest>" strata over the external pairs, with the worst set
/// chosen by recall decline on the original arm. k is capped at the number of external pairs.
inline Table3Report summarize_table3(const ExperimentTable& table, std::size_t k = 10,
                                     DeclineReference ref = DeclineReference::row) {
    table.require_complete(Arm::original);
    table.require_complete(Arm::pca);
    const auto declines = compute_declines(table, Arm::original, ref);
    if (declines.empty()) throw ExperimentError("no external pairs to summarise");
    const std::size_t worst = std::min(k, declines.size());
    const auto worst_pairs = worst_k(declines, worst);
    std::set<PairKey> worst_set(worst_pairs.begin(), worst_pairs.end());

    std::vector<PairKey> all, rest;
    for (const auto& d : declines) {
        PairKey key{d.eval_dataset, d.train_dataset, Arm::original};
        all.push_back(key);
        if (!worst_set.count(key)) rest.push_back(key);
    }

    Table3Report report;
    report.worst = worst;
    report.strata.push_back(detail::make_stratum(table, "All pairs", all));
    report.strata.push_back(detail::make_stratum(table, "Worst " + std::to_string(worst), worst_pairs));
    if (!rest.empty()) {
        report.strata.push_back(detail::make_stratum(table, "Other " + std::to_string(rest.size()), rest));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Rendering

inline constexpr double kEmphasisThreshold = 0.05;

/// |diff| >= 0.05, with a 1e-9 allowance for differences of two-decimal values.
inline bool emphasized(double diff) { return std::abs(diff) >= kEmphasisThreshold - 1e-9; }

struct Table2Cell {
    double original = 0.0;
    double pca = 0.0;
    double diff = 0.0;
};

struct Table2 {
    std::vector<std::string> datasets;
    std::vector<std::vector<Table2Cell>> rows;  // [eval][train]
    std::vector<Table2Cell> mean;               // per training dataset

    std::string to_csv() const;
    std::string to_markdown() const;
};

inline Table2 render_table2(const ExperimentTable& table) {
    table.require_complete(Arm::original);
    table.require_complete(Arm::pca);
    Table2 out;
    out.datasets = table.datasets();
    const std::size_t n = out.datasets.size();
    out.rows.assign(n, std::vector<Table2Cell>(n));
    out.mean.assign(n, {});
    for (std::size_t e = 0; e < n; ++e) {
        for (std::size_t t = 0; t < n; ++t) {
            const double o = table.recall(out.datasets[e], out.datasets[t], Arm::original);
            const double p = table.recall(out.datasets[e], out.datasets[t], Arm::pca);
            out.rows[e][t] = {o, p, p - o};
        }
    }
    for (std::size_t t = 0; t < n; ++t) {
        double so = 0.0, sp = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            so += out.rows[e][t].original;
            sp += out.rows[e][t].pca;
        }
        const double mo = so / static_cast<double>(n);
        const double mp = sp / static_cast<double>(n);
        out.mean[t] = {mo, mp, mp - mo};
    }
    return out;
}

namespace detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s(buf);
    if (s == "-0.00" || s == "-0.000000") s.erase(0, 1);
    return s;
}

}  // namespace detail

inline std::string Table2::to_csv() const {
    std::ostringstream out;
    out << "eval_dataset";
    for (const auto& t : datasets) out << ',' << t << "_ori," << t << "_pca," << t << "_diff";
    out << '\n';
    auto line = [&](const std::string& label, const std::vector<Table2Cell>& cells) {
        out << label;
        for (const auto& c : cells) {
            out << ',' << detail::fixed(c.original, 6) << ',' << detail::fixed(c.pca, 6) << ','
                << detail::fixed(c.diff, 6);
        }
        out << '\n';
    };
    for (std::size_t e = 0; e < datasets.size(); ++e) line(datasets[e], rows[e]);
    line("Mean", mean);
    return out.str();
}

inline std::string Table2::to_markdown() const {
    std::ostringstream out;
    out << "| Eval \\ Train |";
    for (const auto& t : datasets) out << ' ' << t << " Ori | " << t << " PCA | " << t << " Diff |";
    out << "\n|---|";
    for (std::size_t i = 0; i < datasets.size(); ++i) out << "---:|---:|---:|";
    out << '\n';
    auto line = [&](const std::string& label, const std::vector<Table2Cell>& cells) {
        out << "| " << label << " |";
        for (const auto& c : cells) {
            const std::string d = detail::fixed(c.diff, 2);
            out << ' ' << detail::fixed(c.original, 2) << " | " << detail::fixed(c.pca, 2) << " | "
                << (emphasized(c.diff) ? "**" + d + "**" : d) << " |";
        }
        out << '\n';
    };
    for (std::size_t e = 0; e < datasets.size(); ++e) line(datasets[e], rows[e]);
    line("Mean", mean);
    out << "\nRecall per model-dataset pair. Bold: |Diff| >= 0.05.\n";
    return out.str();
}

inline std::string declines_csv(const std::vector<DeclineRecord>& declines, const std::vector<PairKey>& worst) {
    std::set<std::pair<std::string, std::string>> flagged;
    for (const auto& k : worst) flagged.insert({k.eval_dataset, k.train_dataset});
    std::ostringstream out;
    out << "arm,eval_dataset,train_dataset,in_domain_recall,external_recall,decline,worst\n";
    for (const auto& d : declines) {
        out << to_string(d.arm) << ',' << d.eval_dataset << ',' << d.train_dataset << ','
            << detail::fixed(d.in_domain_recall, 6) << ',' << detail::fixed(d.external_recall, 6) << ','
            << detail::fixed(d.decline, 6) << ','
            << (d.arm == Arm::original && flagged.count({d.eval_dataset, d.train_dataset}) ? 1 : 0) << '\n';
    }
    return out.str();
}

inline std::string table3_csv(const Table3Report& report, double alpha = 0.05) {
    std::ostringstream out;
    out << "stratum,metric,n,ori_mean,ori_std,pca_mean,pca_std,t,df,p,significant\n";
    auto line = [&](const Stratum& s, const char* metric, const MetricComparison& c) {
        out << s.name << ',' << metric << ',' << c.original.n << ',' << detail::fixed(c.original.mean, 6) << ','
            << (std::isnan(c.original.std) ? "" : detail::fixed(c.original.std, 6)) << ','
            << detail::fixed(c.pca.mean, 6) << ',' << (std::isnan(c.pca.std) ? "" : detail::fixed(c.pca.std, 6))
            << ',';
        if (c.test) {
            char p[64];
            std::snprintf(p, sizeof p, "%.6g", c.test->p);
            out << detail::fixed(c.test->t, 6) << ',' << detail::fixed(c.test->df, 3) << ',' << p << ','
                << (c.test->significant(alpha) ? "*" : "");
        } else {
            out << ",,,degenerate";
        }
        out << '\n';
    };
    for (const auto& s : report.strata) {
        line(s, "recall", s.recall);
        if (s.dice) line(s, "dice", *s.dice);
    }
    return out.str();
}

}  // namespace pcaharm
