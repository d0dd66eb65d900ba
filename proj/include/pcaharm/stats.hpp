#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pcaharm/common.hpp"

namespace pcaharm::stats {

struct SampleSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // divisor n - 1; NaN when n == 1
};

enum class TestKind { paired, welch, pooled };

inline const char* to_string(TestKind k) {
    switch (k) {
    case TestKind::paired: return "paired";
    case TestKind::welch: return "welch";
    case TestKind::pooled: return "pooled";
    }
    return "?";
}

struct TestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-tailed
    TestKind kind = TestKind::paired;

    bool significant(double alpha = 0.05) const { return p < alpha; }
};

inline SampleSummary summarize(std::span<const double> xs) {
    if (xs.empty()) throw StatsError("cannot summarise an empty sample");
    SampleSummary s;
    s.n = xs.size();
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n < 2) {
        s.std = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    return s;
}

namespace detail {

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    constexpr int max_iter = 200000;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) return h;
    }
    throw StatsError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularised incomplete beta function I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw StatsError("incomplete beta requires a, b > 0");
    if (x < 0.0 || x > 1.0 || std::isnan(x)) throw StatsError("incomplete beta requires x in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-tailed survival probability P(|T| >= |t|) of Student's t with `df` degrees of freedom.
inline double t_sf(double t, double df) {
    if (!(df > 0.0)) throw StatsError("t distribution needs df > 0");
    if (std::isnan(t)) throw StatsError("t statistic is NaN");
    if (t == 0.0) return 1.0;
    if (std::isinf(t)) return 0.0;
    const double x = df / (df + t * t);
    double p = incomplete_beta(0.5 * df, 0.5, x);
    return std::min(std::max(p, 0.0), 1.0);
}

namespace detail {

inline TestResult finish(double t, double df, TestKind kind) { return {t, df, t_sf(t, df), kind}; }

}  // namespace detail

/// Paired test on the differences b - a.
inline TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw StatsError("paired t-test needs samples of equal length");
    if (a.size() < 2) throw StatsError("paired t-test needs at least 2 pairs");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = b[i] - a[i];
    const SampleSummary s = summarize(diff);
    if (s.std == 0.0) throw DegenerateTestError("paired differences have zero variance");
    const double n = static_cast<double>(s.n);
    return detail::finish(s.mean / (s.std / std::sqrt(n)), n - 1.0, TestKind::paired);
}

/// Unequal-variance test of mean(b) - mean(a) with Welch-Satterthwaite degrees of freedom.
inline TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw StatsError("Welch t-test needs at least 2 values per sample");
    const SampleSummary sa = summarize(a);
    const SampleSummary sb = summarize(b);
    const double va = sa.std * sa.std / static_cast<double>(sa.n);
    const double vb = sb.std * sb.std / static_cast<double>(sb.n);
    if (va + vb == 0.0) throw DegenerateTestError("both samples have zero variance");
    const double t = (sb.mean - sa.mean) / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) /
                      (va * va / static_cast<double>(sa.n - 1) + vb * vb / static_cast<double>(sb.n - 1));
    return detail::finish(t, df, TestKind::welch);
}

/// Equal-variance (pooled) two-sample test of mean(b) - mean(a).
inline TestResult pooled_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw StatsError("pooled t-test needs at least 2 values per sample");
    const SampleSummary sa = summarize(a);
    const SampleSummary sb = summarize(b);
    const double na = static_cast<double>(sa.n);
    const double nb = static_cast<double>(sb.n);
    const double df = na + nb - 2.0;
    const double pooled = ((na - 1.0) * sa.std * sa.std + (nb - 1.0) * sb.std * sb.std) / df;
    if (pooled == 0.0) throw DegenerateTestError("both samples have zero variance");
    const double t = (sb.mean - sa.mean) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    return detail::finish(t, df, TestKind::pooled);
}

}  // namespace pcaharm::stats
