// Acceptance runner. One line per criterion:
//
//   PASS <name>: <measurements>
//   FAIL <name>: <measurements and the offending entries>
//
// Usage: pcaharm_acceptance [--only <name>]. Exit status is non-zero if any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pcaharm/pcaharm.hpp"
#include "support/checks.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace pcaharm;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Report {
public:
    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass_ = false;
            failures_ << (failures_.tellp() > 0 ? "; " : "") << what;
        }
    }
    void note(const std::string& what) { notes_ << (notes_.tellp() > 0 ? ", " : "") << what; }
    Outcome done() const {
        std::string d = notes_.str();
        if (!pass_) d += (d.empty() ? "" : " | ") + std::string("violations: ") + failures_.str();
        return {pass_, d};
    }

private:
    bool pass_ = true;
    std::ostringstream notes_;
    std::ostringstream failures_;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol + 1e-9; }

// Published Mean row of the recall table, per training dataset in fixture order.
constexpr double kMeanOri[] = {0.74, 0.57, 0.70, 0.77, 0.63, 0.75};
constexpr double kMeanPca[] = {0.73, 0.72, 0.75, 0.78, 0.68, 0.76};
constexpr double kMeanDiff[] = {-0.01, 0.15, 0.05, 0.01, 0.05, 0.01};

Outcome table2_mean_row() {
    const auto t0 = std::chrono::steady_clock::now();
    const Table2 t2 = render_table2(fixture::table2());
    Report r;
    const auto& names = t2.datasets;
    for (std::size_t e = 0; e < names.size(); ++e) {
        for (std::size_t t = 0; t < names.size(); ++t) {
            const double expected = fixture::kTable2Pca[e][t] - fixture::kTable2Original[e][t];
            r.check(t2.rows[e][t].diff == expected, "Diff " + names[e] + "/" + names[t]);
        }
    }
    int ok = 0;
    for (std::size_t t = 0; t < names.size(); ++t) {
        const Table2Cell& m = t2.mean[t];
        const struct {
            const char* col;
            double got, want;
        } entries[] = {{"Ori", m.original, kMeanOri[t]}, {"PCA", m.pca, kMeanPca[t]}, {"Diff", m.diff, kMeanDiff[t]}};
        for (const auto& x : entries) {
            const bool good = within(x.got, x.want, 0.005);
            ok += good;
            r.check(good, "Mean " + names[t] + " " + x.col + fmt(" %.4f vs %.2f", x.got, x.want));
        }
    }
    const double secs = seconds_since(t0);
    r.note(std::to_string(ok) + "/18 mean entries within 0.005");
    r.note("36 diff cells exact");
    r.note(fmt("%.3fs", secs));
    r.check(secs < 1.0, "runtime");
    return r.done();
}

Outcome mean_decline_criterion() {
    const ExperimentTable t = fixture::table2();
    const double ori = mean_decline(compute_declines(t, Arm::original));
    const double pca = mean_decline(compute_declines(t, Arm::pca));
    Report r;
    r.note(fmt("original %.4f", ori));
    r.note(fmt("pca %.4f", pca));
    r.note(fmt("reduction %.1f%%", 100.0 * (1.0 - pca / ori)));
    r.check(within(ori, 0.12, 0.01), "original mean decline not in 0.12 +/- 0.01");
    r.check(pca >= 0.065 && pca <= 0.085, "pca mean decline not in [0.065, 0.085]");
    return r.done();
}

Outcome worst10() {
    const ExperimentTable t = fixture::table2();
    const auto pairs = worst_k(compute_declines(t, Arm::original), 10);
    std::vector<double> ori, pca;
    for (const auto& k : pairs) {
        ori.push_back(t.recall(k.eval_dataset, k.train_dataset, Arm::original));
        pca.push_back(t.recall(k.eval_dataset, k.train_dataset, Arm::pca));
    }
    const auto so = stats::summarize(ori);
    const auto sp = stats::summarize(pca);
    const auto test = stats::paired_t_test(ori, pca);
    Report r;
    r.note(fmt("ori %.3f +/- %.3f", so.mean, so.std));
    r.note(fmt("pca %.3f +/- %.3f", sp.mean, sp.std));
    r.note(fmt("t=%.3f df=%.0f", test.t, test.df));
    r.note(fmt("p=%.5f", test.p));
    r.check(within(so.mean, 0.57, 0.015), "ori mean");
    r.check(within(so.std, 0.07, 0.02), "ori std");
    r.check(within(sp.mean, 0.70, 0.015), "pca mean");
    r.check(within(sp.std, 0.05, 0.02), "pca std");
    r.check(test.t >= 4.3 && test.t <= 6.5, "t outside [4.3, 6.5]");
    r.check(test.df == 9.0, "df != 9");
    r.check(test.p < 0.002, "p >= 0.002");
    return r.done();
}

Outcome all_pairs() {
    Report r;
    synth::LogCapture quiet;
    const Table3Report t3 = summarize_table3(fixture::table2());
    const auto& all = t3.strata.at(0);
    r.note(all.name + " n=" + std::to_string(all.recall.original.n));
    r.note(fmt("ori %.3f +/- %.3f", all.recall.original.mean, all.recall.original.std));
    r.note(fmt("pca %.3f +/- %.3f", all.recall.pca.mean, all.recall.pca.std));
    r.check(all.recall.original.n == 30, "expected 30 external pairs");
    r.check(within(all.recall.original.mean, 0.68, 0.015), "ori mean");
    r.check(within(all.recall.pca.mean, 0.72, 0.015), "pca mean");
    return r.done();
}

Outcome pca_properties() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240601);
    Report r;
    double worst_recon = 0, worst_ortho = 0, worst_energy = 0, worst_gram = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng() % 12;
        const std::size_t d = n + 1 + rng() % 30;  // n < d, so the automatic route is the Gram trick
        const DataMatrix x = synth::random_matrix(rng, n, d);
        const PcaModel m = fit_pca(x, FitRoute::gram);
        const auto dense = oracle::jacobi_eigenvalues(oracle::covariance(x));
        for (std::size_t i = 0; i < m.k_max(); ++i) {
            worst_gram = std::max(worst_gram, std::abs(m.eigenvalues(static_cast<Eigen::Index>(i)) - dense[i]));
        }
        worst_recon = std::max(worst_recon, checks::full_rank_error(m, x));
        worst_ortho = std::max(worst_ortho, checks::orthonormality_error(m));
        worst_energy = std::max(worst_energy, checks::energy_error(m, x));
    }
    int monotone = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const DataMatrix x = synth::random_matrix(rng, 4 + rng() % 20, 2 + rng() % 20);
        monotone += checks::non_increasing(checks::residuals(fit_pca(x), x));
    }
    const double secs = seconds_since(t0);
    r.note(fmt("recon %.1e", worst_recon));
    r.note(fmt("ortho %.1e", worst_ortho));
    r.note(fmt("gram-vs-dense %.1e", worst_gram));
    r.note(fmt("energy %.1e", worst_energy));
    r.note(std::to_string(monotone) + "/20 monotone");
    r.note(fmt("%.2fs", secs));
    r.check(worst_recon <= 1e-6, "full-rank reconstruction");
    r.check(worst_ortho <= 1e-8, "orthonormality");
    r.check(worst_gram <= 1e-8, "Gram vs dense covariance eigenvalues");
    r.check(worst_energy <= 1e-6, "spectrum/energy identity");
    r.check(monotone == 20, "residual monotonicity");
    r.check(secs < 30.0, "runtime");
    return r.done();
}

Outcome selection_criteria() {
    Report r;
    using V = std::vector<double>;
    r.check(kaiser_guttman(V{3.2, 1.5, 0.9, 0.4}) == 2, "kaiser [3.2,1.5,0.9,0.4]");
    r.check(kaiser_guttman(V{0.5, 0.3}) == 1, "kaiser [0.5,0.3]");
    r.check(kaiser_guttman(V{1.0, 1.0}) == 1, "kaiser [1,1]");
    r.check(std::abs(cumulative_explained_variance(V{4, 3, 2, 1}, 2) - 0.7) <= 1e-12, "cev [4,3,2,1] k=2");
    r.check(cumulative_explained_variance(V{4, 3, 2, 1}, 4) == 1.0, "cev full");
    r.check(cumulative_explained_variance(V{5, 0, 0}, 1) == 1.0, "cev rank-1");
    std::mt19937_64 rng(77);
    double worst = 0;
    int kaiser_ok = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = checks::random_spectrum(rng);
        kaiser_ok += kaiser_guttman(s) == checks::kaiser_oracle(s, 1.0);
        for (std::size_t k = 1; k <= s.size(); ++k) {
            worst = std::max(worst, std::abs(cumulative_explained_variance(s, k) - checks::cumulative_oracle(s, k)));
        }
    }
    r.note("6 enumerated cases");
    r.note(std::to_string(kaiser_ok) + "/100 kaiser");
    r.note(fmt("cev max err %.1e", worst));
    r.check(kaiser_ok == 100, "randomized kaiser");
    r.check(worst <= 1e-12, "randomized cumulative variance");
    return r.done();
}

Outcome metrics_oracle() {
    Report r;
    std::mt19937_64 rng(4242);
    int exact = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t w = 1 + rng() % 64, h = 1 + rng() % 64;
        const double density = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const Mask pred = synth::random_mask(rng, w, h, density);
        const Mask gt = synth::random_mask(rng, w, h, 1.0 - density);
        const ConfusionCounts c = confusion(pred, gt);
        const oracle::Counts o = oracle::set_counts(pred, gt);
        bool same = c.tp == o.tp && c.fp == o.fp && c.fn == o.fn && c.tn == o.tn;
        if (o.tp + o.fn > 0) same = same && recall(c).value == double(o.tp) / double(o.tp + o.fn);
        if (2 * o.tp + o.fp + o.fn > 0) same = same && dice(c).value == 2.0 * double(o.tp) / double(2 * o.tp + o.fp + o.fn);
        exact += same;
    }
    const double loss = combined_loss(Image(2, 2, 0.5f), Mask(2, 2, std::vector<std::uint8_t>{1, 1, 0, 0}), {0.5, 0.0});
    const double expected = 0.5 * 0.5 + 0.5 * std::log(2.0);
    r.note(std::to_string(exact) + "/200 exact");
    r.note(fmt("loss %.12f vs %.12f", loss, expected));
    r.check(exact == 200, "confusion/recall/dice mismatch");
    r.check(std::abs(loss - expected) <= 1e-9, "combined loss");
    return r.done();
}

Outcome stats_kernels() {
    Report r;
    const double p1 = stats::t_sf(2.262, 9), q1 = oracle::t_two_tailed(2.262, 9);
    const double p2 = stats::t_sf(1.959964, 1e6), q2 = oracle::t_two_tailed(1.959964, 1e6);
    r.note(fmt("t_sf(2.262,9)=%.6f (quadrature %.6f)", p1, q1));
    r.note(fmt("t_sf(1.959964,1e6)=%.6f (quadrature %.6f)", p2, q2));
    r.check(within(p1, 0.050, 0.001) && within(q1, 0.050, 0.001), "t_sf(2.262, 9)");
    r.check(within(p2, 0.0500, 0.0005) && within(q2, 0.0500, 0.0005), "t_sf(1.959964, 1e6)");

    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t na = 3 + rng() % 20, nb = 3 + rng() % 20;
        std::vector<double> a(na), b(nb), paired(na);
        for (auto& v : a) v = 0.6 + 0.1 * g(rng);
        for (auto& v : b) v = 0.65 + 0.15 * g(rng);
        for (std::size_t i = 0; i < na; ++i) paired[i] = a[i] + 0.03 + 0.05 * g(rng);
        const auto pt = stats::paired_t_test(a, paired);
        const auto po = oracle::paired_t(a, paired);
        const auto wt = stats::welch_t_test(a, b);
        const auto wo = oracle::welch_t(a, b);
        worst = std::max({worst, std::abs(pt.t - po.t), std::abs(pt.df - po.df),
                          std::abs(pt.p - oracle::t_two_tailed(po.t, po.df)), std::abs(wt.t - wo.t),
                          std::abs(wt.df - wo.df), std::abs(wt.p - oracle::t_two_tailed(wo.t, wo.df))});
    }
    r.note(fmt("50 paired+Welch max err %.1e", worst));
    r.check(worst <= 1e-6, "paired/Welch vs oracle");
    return r.done();
}

Outcome end_to_end() {
    const auto t0 = std::chrono::steady_clock::now();
    synth::TempDir dir("acceptance_e2e");
    synth::write_blob_dataset(dir.path() / "in" / "alpha", 30, 32, 32, 11, 0.15f);
    synth::write_blob_dataset(dir.path() / "in" / "beta", 30, 40, 36, 12, 0.35f);
    RunConfig cfg;
    cfg.output_dir = dir.path() / "out";
    cfg.resize = std::pair<std::size_t, std::size_t>{32, 32};
    cfg.trainer = PCAHARM_STUB_TRAINER;
    cfg.datasets = {{"alpha", dir.path() / "in" / "alpha", {}}, {"beta", dir.path() / "in" / "beta", {}}};
    Report r;
    {
        synth::LogCapture quiet;
        run_pipeline(cfg);
    }
    const RunLayout layout{cfg.output_dir};
    const ExperimentTable table = read_results_csv(layout.results());
    int ones = 0;
    for (const auto& [key, res] : table.cells()) ones += res.recall == 1.0;
    const bool complete = table.complete(Arm::original) && table.complete(Arm::pca);
    bool reports = true;
    for (const char* f : {"table2.csv", "table2.md", "table3.csv", "declines.csv"}) {
        reports = reports && fs::exists(layout.reports() / f);
    }
    const double secs = seconds_since(t0);
    r.note(std::to_string(table.cells().size()) + " cells");
    r.note(std::to_string(ones) + " with recall 1.0");
    r.note(fmt("%.1fs", secs));
    r.check(complete && table.cells().size() == 8, "incomplete two-dataset table");
    r.check(ones == 8, "recall below 1.0");
    r.check(reports, "missing report files");
    r.check(secs < 60.0, "runtime");
    return r.done();
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"table2_mean_row", table2_mean_row}, {"mean_decline", mean_decline_criterion},
        {"worst10", worst10},                 {"all_pairs", all_pairs},
        {"pca_properties", pca_properties},   {"selection_criteria", selection_criteria},
        {"metrics_oracle", metrics_oracle},   {"stats_kernels", stats_kernels},
        {"end_to_end", end_to_end},
    };
    std::string only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only = argv[++i];
        } else {
            std::fprintf(stderr, "usage: %s [--only <criterion>]\n", argv[0]);
            return 2;
        }
    }
    int failed = 0, ran = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && name != only) continue;
        ++ran;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        failed += !o.pass;
    }
    if (ran == 0) {
        std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
        return 2;
    }
    return failed == 0 ? 0 : 1;
}
