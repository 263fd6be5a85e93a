#pragma once

// Power-law tail estimation. Exponents follow the CCDF convention:
// P(X >= x) ~ x^-zeta, so the density decays as x^-(zeta+1).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patchscale/errors.hpp"
#include "patchscale/random.hpp"

namespace patchscale {

enum class Variable { Duration, TradeCount, TradedValue };

inline std::string_view to_string(Variable v) {
    switch (v) {
        case Variable::Duration: return "T";
        case Variable::TradeCount: return "N_m";
        case Variable::TradedValue: return "V_m";
    }
    return "?";
}

struct Interval {
    double low = 0.0;
    double high = 0.0;

    [[nodiscard]] double width() const noexcept { return high - low; }
    [[nodiscard]] bool contains(double x) const noexcept { return low <= x && x <= high; }
};

struct TailFit {
    Variable variable = Variable::TradedValue;
    double zeta = 0.0;
    Interval ci95;
    std::size_t k = 0;
    double x_k = 0.0;  // x_(k+1), the largest value outside the tail
    std::size_t n = 0;
};

namespace detail {

inline void require_positive(std::span<const double> xs, const char* who) {
    for (double x : xs) {
        if (!(x > 0.0) || !std::isfinite(x)) {
            throw std::invalid_argument(std::string(who) + ": sample values must be finite and positive");
        }
    }
}

inline std::vector<double> sorted_descending(std::span<const double> xs) {
    std::vector<double> s(xs.begin(), xs.end());
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
}

/// Hill estimate from the top k+1 order statistics, given in descending order.
inline double hill_from_sorted(std::span<const double> desc, std::size_t k) {
    const double ref = std::log(desc[k]);
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += std::log(desc[i]) - ref;
    if (!(acc > 0.0)) throw NumericalError("hill: tail order statistics are all equal to the threshold");
    return static_cast<double>(k) / acc;
}

}  // namespace detail

/// Hill (maximum likelihood) tail exponent from the k largest values, with the
/// asymptotic normal interval zeta * (1 -/+ 1.96/sqrt(k)).
inline TailFit hill(std::span<const double> xs, std::size_t k, Variable variable = Variable::TradedValue) {
    detail::require_positive(xs, "hill");
    if (k < 1) throw std::invalid_argument("hill: k must be >= 1");
    if (k >= xs.size()) throw std::invalid_argument("hill: k must be smaller than the sample size");
    std::vector<double> top(xs.begin(), xs.end());
    std::nth_element(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(k), top.end(), std::greater<>());
    std::sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
    TailFit fit;
    fit.variable = variable;
    fit.k = k;
    fit.n = xs.size();
    fit.x_k = top[k];
    fit.zeta = detail::hill_from_sorted(std::span<const double>(top).first(k + 1), k);
    const double half = 1.96 / std::sqrt(static_cast<double>(k));
    fit.ci95 = {fit.zeta * (1.0 - half), fit.zeta * (1.0 + half)};
    return fit;
}

struct KsScan {
    std::size_t k = 0;
    double distance = 0.0;
};

/// KS distance between the empirical tail above x_(k+1) and the fitted Pareto tail,
/// for every candidate k. `desc` is sorted descending.
inline std::vector<KsScan> ks_scan(std::span<const double> desc, std::size_t k_min, std::size_t k_max) {
    std::vector<double> prefix_log(desc.size() + 1, 0.0);
    for (std::size_t i = 0; i < desc.size(); ++i) prefix_log[i + 1] = prefix_log[i] + std::log(desc[i]);

    std::vector<std::size_t> ks;
    const std::size_t span = k_max - k_min + 1;
    constexpr std::size_t kMaxCandidates = 4000;
    if (span <= kMaxCandidates) {
        for (std::size_t k = k_min; k <= k_max; ++k) ks.push_back(k);
    } else {
        // Log-spaced candidates keep the scan near O(n * candidates).
        const double ratio = std::log(static_cast<double>(k_max) / static_cast<double>(k_min));
        for (std::size_t i = 0; i < kMaxCandidates; ++i) {
            const auto k = static_cast<std::size_t>(std::llround(
                static_cast<double>(k_min) * std::exp(ratio * static_cast<double>(i) / (kMaxCandidates - 1))));
            if (ks.empty() || k > ks.back()) ks.push_back(std::min(k, k_max));
        }
    }

    std::vector<KsScan> out;
    out.reserve(ks.size());
    for (std::size_t k : ks) {
        const double log_xmin = std::log(desc[k]);
        const double acc = prefix_log[k] - static_cast<double>(k) * log_xmin;
        if (!(acc > 0.0)) continue;
        const double zeta = static_cast<double>(k) / acc;
        double d = 0.0;
        const double kd = static_cast<double>(k);
        for (std::size_t i = 0; i < k; ++i) {
            // Fitted P(X >= x | X > xmin) at the i-th largest point vs the empirical step.
            const double fitted = std::exp(-zeta * (std::log(desc[i]) - log_xmin));
            const double upper = static_cast<double>(i + 1) / kd;
            const double lower = static_cast<double>(i) / kd;
            d = std::max({d, std::abs(upper - fitted), std::abs(lower - fitted)});
        }
        out.push_back({k, d});
    }
    return out;
}

struct KPolicy {
    enum class Kind { Auto, Fraction, Fixed };
    Kind kind = Kind::Auto;
    double fraction = 0.1;
    std::size_t fixed = 0;

    static KPolicy automatic() { return {}; }
    static KPolicy of_fraction(double f) { return {Kind::Fraction, f, 0}; }
    static KPolicy of_fixed(std::size_t k) { return {Kind::Fixed, 0.1, k}; }

    /// "auto", "fraction:<f>", or "fixed:<k>".
    static KPolicy parse(std::string_view text) {
        if (text == "auto") return automatic();
        auto colon = text.find(':');
        if (colon != std::string_view::npos) {
            auto head = text.substr(0, colon);
            auto tail = text.substr(colon + 1);
            if (head == "fraction") {
                double f = 0;
                auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), f);
                if (ec == std::errc{} && p == tail.data() + tail.size() && f > 0.0 && f < 1.0) return of_fraction(f);
            } else if (head == "fixed") {
                std::size_t k = 0;
                auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), k);
                if (ec == std::errc{} && p == tail.data() + tail.size() && k >= 1) return of_fixed(k);
            }
        }
        throw std::invalid_argument("k policy must be auto, fraction:<f> with 0<f<1, or fixed:<k>");
    }

    [[nodiscard]] std::string describe() const {
        switch (kind) {
            case Kind::Auto: return "auto";
            case Kind::Fraction: {
                char buf[32];
                auto r = std::to_chars(buf, buf + sizeof buf, fraction);
                return "fraction:" + std::string(buf, r.ptr);
            }
            case Kind::Fixed: return "fixed:" + std::to_string(fixed);
        }
        return "auto";
    }
};

inline constexpr std::size_t kMinAutoSample = 50;

/// Number of tail order statistics. Auto mode minimizes the KS distance over k in [10, n/2].
inline std::size_t choose_k(std::span<const double> xs, const KPolicy& policy = {}) {
    detail::require_positive(xs, "choose_k");
    const std::size_t n = xs.size();
    switch (policy.kind) {
        case KPolicy::Kind::Fixed:
            if (policy.fixed >= n) throw std::invalid_argument("choose_k: fixed k must be smaller than n");
            return policy.fixed;
        case KPolicy::Kind::Fraction: {
            const auto k = static_cast<std::size_t>(std::floor(policy.fraction * static_cast<double>(n)));
            if (k < 1 || k >= n) throw std::invalid_argument("choose_k: fraction yields k outside [1, n)");
            return k;
        }
        case KPolicy::Kind::Auto: break;
    }
    if (n < kMinAutoSample) {
        throw std::invalid_argument("choose_k: automatic selection needs n >= 50 (got " + std::to_string(n) +
                                    "); use fraction:<f> or fixed:<k>");
    }
    const auto desc = detail::sorted_descending(xs);
    const auto scan = ks_scan(desc, 10, n / 2);
    if (scan.empty()) throw NumericalError("choose_k: no candidate k with a non-degenerate tail");
    auto best = std::min_element(scan.begin(), scan.end(),
                                 [](const KsScan& a, const KsScan& b) { return a.distance < b.distance; });
    return best->k;
}

/// Percentile bootstrap interval for the Hill exponent at fixed k. The point estimate
/// is kept inside the interval (ties from resampling bias the Hill estimate upward).
inline Interval hill_bootstrap_ci(std::span<const double> xs, std::size_t k, std::size_t resamples,
                                  std::uint64_t seed) {
    const double zeta = hill(xs, k).zeta;
    std::vector<double> est;
    est.reserve(resamples);
    std::vector<double> sample(xs.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        Engine eng(derive_seed(seed, b));
        std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
        for (auto& s : sample) s = xs[pick(eng)];
        try {
            est.push_back(hill(sample, k).zeta);
        } catch (const NumericalError&) {
        }
    }
    if (est.size() < resamples / 2) throw NumericalError("hill bootstrap: too many degenerate resamples");
    std::sort(est.begin(), est.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(est.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(i);
        return i + 1 < est.size() ? est[i] * (1 - frac) + est[i + 1] * frac : est[i];
    };
    return {std::min(q(0.025), zeta), std::max(q(0.975), zeta)};
}

struct CcdfPoint {
    double x = 0.0;
    double p = 0.0;  // P(X >= x)
};

inline std::vector<CcdfPoint> ccdf(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("ccdf: empty sample");
    std::vector<double> s(xs.begin(), xs.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    std::vector<CcdfPoint> out;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        while (j < s.size() && s[j] == s[i]) ++j;
        out.push_back({s[i], static_cast<double>(s.size() - i) / n});
        i = j;
    }
    return out;
}

}  // namespace patchscale
