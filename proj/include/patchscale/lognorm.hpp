#pragma once

// Jarque-Bera normality test and per-firm lognormality of patch variables.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchscale/errors.hpp"
#include "patchscale/random.hpp"
#include "patchscale/tail_stats.hpp"

namespace patchscale {

/// 95% quantile of chi-squared with 2 degrees of freedom: -2 ln 0.05.
inline constexpr double kChi2Df2Critical95 = 5.991464547107979;

inline constexpr std::size_t kJbMinSample = 8;
inline constexpr std::size_t kJbAsymptoticFrom = 50;

struct Moments {
    double skewness = 0.0;
    double kurtosis = 0.0;  // raw (normal = 3)
};

/// Sample skewness m3/m2^1.5 and kurtosis m4/m2^2 from central moments with 1/n weights.
inline Moments sample_moments(std::span<const double> xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : xs) {
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    double scale = 0;
    for (double x : xs) scale = std::max(scale, std::abs(x));
    const double eps = 1e3 * std::numeric_limits<double>::epsilon() * std::max(scale, 1e-300);
    if (!(m2 > eps * eps)) throw NumericalError("jarque_bera: zero variance");
    return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

inline double jarque_bera_statistic(std::span<const double> xs) {
    if (xs.size() < kJbMinSample) throw std::invalid_argument("jarque_bera: needs at least 8 values");
    const auto m = sample_moments(xs);
    const double ex = m.kurtosis - 3.0;
    return static_cast<double>(xs.size()) / 6.0 * (m.skewness * m.skewness + ex * ex / 4.0);
}

/// Monte Carlo 95% quantile of the JB statistic under normality for sample size n.
inline double jb_critical_value_mc(std::size_t n, std::size_t trials, std::uint64_t seed) {
    std::vector<double> stats(trials);
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < trials; ++i) {
        Engine eng(derive_seed(derive_seed(seed, n), i));
        std::normal_distribution<double> normal;
        for (auto& x : xs) x = normal(eng);
        stats[i] = jarque_bera_statistic(xs);
    }
    const auto k = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(trials))) - 1;
    std::nth_element(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(k), stats.end());
    return stats[k];
}

/// Small-sample 95% critical values for n = 8..49, from jb_critical_value_mc(n, 200000, 20011231).
/// Regenerate with `patchscale jb-table`.
inline constexpr std::array<double, 42> kJbSmallSampleCritical95 = {
    2.0821,  // n=8
    2.3308,  // n=9
    2.5171,  // n=10
    2.6898,  // n=11
    2.8610,  // n=12
    3.0274,  // n=13
    3.1760,  // n=14
    3.2657,  // n=15
    3.3818,  // n=16
    3.5533,  // n=17
    3.6077,  // n=18
    3.7238,  // n=19
    3.7844,  // n=20
    3.8922,  // n=21
    3.9484,  // n=22
    3.9993,  // n=23
    4.0334,  // n=24
    4.1361,  // n=25
    4.2088,  // n=26
    4.2786,  // n=27
    4.3661,  // n=28
    4.3777,  // n=29
    4.3982,  // n=30
    4.5142,  // n=31
    4.5213,  // n=32
    4.5322,  // n=33
    4.5948,  // n=34
    4.5748,  // n=35
    4.6036,  // n=36
    4.7279,  // n=37
    4.6896,  // n=38
    4.6864,  // n=39
    4.7282,  // n=40
    4.7793,  // n=41
    4.7931,  // n=42
    4.8516,  // n=43
    4.8556,  // n=44
    4.8426,  // n=45
    4.9958,  // n=46
    4.9224,  // n=47
    4.8986,  // n=48
    4.9148,  // n=49
};

inline double jb_critical_value(std::size_t n) {
    if (n < kJbMinSample) throw std::invalid_argument("jarque_bera: needs at least 8 values");
    if (n >= kJbAsymptoticFrom) return kChi2Df2Critical95;
    return kJbSmallSampleCritical95[n - kJbMinSample];
}

struct JarqueBera {
    double statistic = 0.0;
    double critical_value = kChi2Df2Critical95;
    bool reject = false;  // at 95% confidence
};

inline JarqueBera jarque_bera(std::span<const double> xs) {
    JarqueBera r;
    r.statistic = jarque_bera_statistic(xs);
    r.critical_value = jb_critical_value(xs.size());
    r.reject = r.statistic > r.critical_value;
    return r;
}

/// Lognormality of a positive sample is normality of its natural logs.
inline JarqueBera lognormality_test(std::span<const double> xs) {
    std::vector<double> logs;
    logs.reserve(xs.size());
    for (double x : xs) {
        if (!(x > 0.0)) throw std::invalid_argument("lognormality_test: values must be positive");
        logs.push_back(std::log(x));
    }
    return jarque_bera(logs);
}

struct LognormalityResult {
    std::string firm_id;
    Variable variable = Variable::TradedValue;
    std::size_t n = 0;
    double jb_stat = 0.0;
    double critical_value = 0.0;
    bool reject = false;
};

struct LognormalitySummary {
    Variable variable = Variable::TradedValue;
    std::size_t tested = 0;
    std::size_t non_rejecting = 0;
    std::size_t degenerate = 0;  // qualifying firms with zero variance in log space
    std::vector<LognormalityResult> results;

    [[nodiscard]] double percent_non_rejecting() const {
        return tested == 0 ? 0.0 : 100.0 * static_cast<double>(non_rejecting) / static_cast<double>(tested);
    }

    /// Summary-table cell, e.g. "94 (29/31)".
    [[nodiscard]] std::string table_cell() const {
        return std::to_string(static_cast<long long>(std::llround(percent_non_rejecting()))) + " (" +
               std::to_string(non_rejecting) + "/" + std::to_string(tested) + ")";
    }
};

/// Jarque-Bera on ln(variable) per firm with at least `min_patches` observations.
inline LognormalitySummary per_firm_lognormality(const std::map<std::string, std::vector<double>>& by_firm,
                                                 Variable variable, std::size_t min_patches = 10) {
    LognormalitySummary s;
    s.variable = variable;
    const std::size_t min_n = std::max(min_patches, kJbMinSample);
    for (const auto& [firm, xs] : by_firm) {
        if (xs.size() < min_n) continue;
        try {
            const auto jb = lognormality_test(xs);
            s.results.push_back({firm, variable, xs.size(), jb.statistic, jb.critical_value, jb.reject});
            ++s.tested;
            if (!jb.reject) ++s.non_rejecting;
        } catch (const NumericalError&) {
            ++s.degenerate;
        }
    }
    if (s.tested == 0) throw DataError("per_firm_lognormality: no firm has enough non-degenerate patches");
    return s;
}

}  // namespace patchscale
