#pragma once

// Recursive maximum-t segmentation of a signed traded-value series.
//
// A window is split at the position maximizing the two-sample t statistic
// between its left and right parts. The split is kept when the probability
// that an i.i.d. sequence of the same length has a smaller maximum t reaches
// the threshold, and when both new pieces remain significantly different
// from their existing neighbors. Accepted splits are processed recursively.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "patchscale/market_data.hpp"
#include "patchscale/parallel.hpp"
#include "patchscale/random.hpp"

namespace patchscale {

enum class TForm {
    Pooled,  // shared variance, n_L + n_R - 2 degrees of freedom
    Welch,   // separate variances
};

struct CutCandidate {
    std::size_t position = 0;  // first index of the right part, relative to the window
    double t_value = 0.0;
    double significance = 0.0;
};

struct Segmentation {
    std::vector<std::size_t> boundaries;  // 0 = b_0 < b_1 < ... < b_m = n
    double threshold = 0.99;

    [[nodiscard]] std::size_t segment_count() const noexcept {
        return boundaries.size() < 2 ? 0 : boundaries.size() - 1;
    }
    [[nodiscard]] std::size_t cut_count() const noexcept {
        return boundaries.size() < 2 ? 0 : boundaries.size() - 2;
    }
};

namespace detail {

/// Sums over a window, accumulated relative to the window mean so large
/// offsets (typical for one-sided trade values) do not cancel catastrophically.
class CenteredPrefix {
public:
    explicit CenteredPrefix(std::span<const double> values) : sum_(values.size() + 1), sq_(values.size() + 1) {
        double scale = 0.0;
        double mean = 0.0;
        for (double v : values) {
            mean += v;
            scale = std::max(scale, std::abs(v));
        }
        mean /= static_cast<double>(std::max<std::size_t>(values.size(), 1));
        scale_ = scale;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double d = values[i] - mean;
            sum_[i + 1] = sum_[i] + d;
            sq_[i + 1] = sq_[i] + d * d;
        }
    }

    [[nodiscard]] double sum(std::size_t lo, std::size_t hi) const { return sum_[hi] - sum_[lo]; }
    [[nodiscard]] double sum_sq(std::size_t lo, std::size_t hi) const { return sq_[hi] - sq_[lo]; }

    /// Sum of squared deviations from the part's own mean, clamped at 0.
    [[nodiscard]] double ss(std::size_t lo, std::size_t hi) const {
        const double n = static_cast<double>(hi - lo);
        const double s = sum(lo, hi);
        return std::max(0.0, sum_sq(lo, hi) - s * s / n);
    }

    [[nodiscard]] double scale() const noexcept { return scale_; }

private:
    std::vector<double> sum_;
    std::vector<double> sq_;
    double scale_ = 0.0;
};

inline double t_from_moments(double mean_l, double ss_l, std::size_t n_l, double mean_r, double ss_r,
                             std::size_t n_r, double scale, TForm form) {
    const double nl = static_cast<double>(n_l);
    const double nr = static_cast<double>(n_r);
    const double diff = std::abs(mean_l - mean_r);
    // Residual variance below roundoff of the data's magnitude counts as zero.
    const double eps = std::numeric_limits<double>::epsilon() * scale;
    const double noise_floor = 64.0 * eps * eps * (nl + nr);
    double denom = 0.0;
    if (form == TForm::Pooled) {
        const double pooled_var = (ss_l + ss_r) / (nl + nr - 2.0);
        if (ss_l + ss_r <= noise_floor) {
            return diff <= 8.0 * eps ? 0.0 : std::numeric_limits<double>::infinity();
        }
        denom = std::sqrt(pooled_var * (1.0 / nl + 1.0 / nr));
    } else {
        const double var_l = ss_l / (nl - 1.0);
        const double var_r = ss_r / (nr - 1.0);
        if (ss_l + ss_r <= noise_floor) {
            return diff <= 8.0 * eps ? 0.0 : std::numeric_limits<double>::infinity();
        }
        denom = std::sqrt(var_l / nl + var_r / nr);
    }
    return diff / denom;
}

}  // namespace detail

/// Two-sample t between values[0, split) and values[split, n).
/// Returns +inf for a deterministic step (zero spread, different means) and 0 for equal means.
inline double t_statistic(std::span<const double> values, std::size_t split, TForm form = TForm::Pooled) {
    if (split < 2 || split + 2 > values.size()) {
        throw std::invalid_argument("t_statistic: each side needs at least 2 points (n=" +
                                    std::to_string(values.size()) + ", split=" + std::to_string(split) + ")");
    }
    detail::CenteredPrefix p(values);
    const std::size_t n = values.size();
    const double ml = p.sum(0, split) / static_cast<double>(split);
    const double mr = p.sum(split, n) / static_cast<double>(n - split);
    return detail::t_from_moments(ml, p.ss(0, split), split, mr, p.ss(split, n), n - split, p.scale(), form);
}

/// Scan of all admissible splits; nullopt when the window has fewer than 4 points.
/// Ties resolve to the smallest position.
inline std::optional<CutCandidate> max_t(std::span<const double> values, TForm form = TForm::Pooled) {
    const std::size_t n = values.size();
    if (n < 4) return std::nullopt;
    detail::CenteredPrefix p(values);
    CutCandidate best{2, -1.0, 0.0};
    for (std::size_t split = 2; split + 2 <= n; ++split) {
        const double ml = p.sum(0, split) / static_cast<double>(split);
        const double mr = p.sum(split, n) / static_cast<double>(n - split);
        const double t =
            detail::t_from_moments(ml, p.ss(0, split), split, mr, p.ss(split, n), n - split, p.scale(), form);
        if (t > best.t_value) {
            best.position = split;
            best.t_value = t;
        }
    }
    return best;
}

/// Probability that an i.i.d. sequence of length n has maximum t <= t_max, using the
/// closed-form fit {1 - I_x(delta*nu, delta)}^eta, x = nu/(nu + t^2), nu = n - 2,
/// delta = 0.40, eta = 4.19 ln n - 11.54. The fit needs eta > 0, i.e. n >= 16.
inline double closed_form_significance(double t_max, std::size_t n) {
    constexpr double kDelta = 0.40;
    if (n < 4) throw std::invalid_argument("significance: n must be >= 4");
    if (!(t_max >= 0.0)) throw std::invalid_argument("significance: t_max must be >= 0");
    const double eta = 4.19 * std::log(static_cast<double>(n)) - 11.54;
    if (eta <= 0.0) {
        throw std::invalid_argument("significance: closed form undefined for n=" + std::to_string(n) +
                                    " (needs n >= 16); use the Monte Carlo null");
    }
    if (t_max == 0.0) return 0.0;
    if (std::isinf(t_max)) return 1.0;
    const double nu = static_cast<double>(n - 2);
    const double x = nu / (nu + t_max * t_max);
    // ibetac = 1 - I_x, evaluated directly to keep precision near 1.
    const double tail = boost::math::ibetac(kDelta * nu, kDelta, x);
    return std::clamp(std::pow(tail, eta), 0.0, 1.0);
}

/// Empirical null of the maximum t over i.i.d. standard-normal sequences of length n.
/// Trial i draws from its own derived seed, so trials can run in any order.
class MaxTNull {
public:
    MaxTNull(std::size_t n, std::size_t trials, std::uint64_t seed, TForm form = TForm::Pooled,
             std::size_t jobs = 1)
        : n_(n), sorted_(trials) {
        if (n < 4) throw std::invalid_argument("MaxTNull: n must be >= 4");
        if (trials < 1) throw std::invalid_argument("MaxTNull: trials must be >= 1");
        const std::uint64_t base = derive_seed(seed, n);
        parallel_for(trials, jobs, [&](std::size_t i) {
            Engine eng(derive_seed(base, i));
            std::normal_distribution<double> normal(0.0, 1.0);
            std::vector<double> xs(n);
            for (auto& x : xs) x = normal(eng);
            sorted_[i] = max_t(xs, form)->t_value;
        });
        std::sort(sorted_.begin(), sorted_.end());
    }

    /// Fraction of trials with max t <= t_max.
    [[nodiscard]] double cdf(double t_max) const {
        if (std::isinf(t_max) && t_max > 0) return 1.0;
        auto it = std::upper_bound(sorted_.begin(), sorted_.end(), t_max);
        return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
    }

    [[nodiscard]] std::size_t length() const noexcept { return n_; }
    [[nodiscard]] std::size_t trials() const noexcept { return sorted_.size(); }

private:
    std::size_t n_;
    std::vector<double> sorted_;
};

inline double significance_mc(double t_max, std::size_t n, std::size_t trials, std::uint64_t seed,
                              TForm form = TForm::Pooled) {
    if (t_max <= 0.0) return 0.0;
    if (std::isinf(t_max)) return 1.0;
    return MaxTNull(n, trials, seed, form).cdf(t_max);
}

enum class SignificanceMode { ClosedForm, MonteCarlo };

struct SignificanceOptions {
    SignificanceMode mode = SignificanceMode::ClosedForm;
    /// In closed-form mode, windows shorter than this use the Monte Carlo null.
    std::size_t small_n_cutoff = 20;
    std::size_t mc_trials = 10000;
    std::uint64_t seed = 0;
    TForm form = TForm::Pooled;
};

/// Significance evaluator with a per-length cache of Monte Carlo nulls.
/// Thread-safe; nulls are built on first use.
class SignificanceModel {
public:
    explicit SignificanceModel(SignificanceOptions opts = {}) : opts_(opts) {
        if (opts_.form == TForm::Welch && opts_.mode == SignificanceMode::ClosedForm) {
            // The closed form was fitted for the pooled statistic; Welch runs go through
            // the Monte Carlo null unconditionally.
            opts_.mode = SignificanceMode::MonteCarlo;
        }
    }

    [[nodiscard]] double operator()(double t_max, std::size_t n) const {
        if (n < 4) throw std::invalid_argument("significance: n must be >= 4");
        if (t_max <= 0.0) return 0.0;
        if (std::isinf(t_max)) return 1.0;
        if (opts_.mode == SignificanceMode::ClosedForm && n >= std::max<std::size_t>(opts_.small_n_cutoff, 16)) {
            return closed_form_significance(t_max, n);
        }
        return null_for(n).cdf(t_max);
    }

    [[nodiscard]] const SignificanceOptions& options() const noexcept { return opts_; }

private:
    const MaxTNull& null_for(std::size_t n) const {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(n);
        if (it == cache_.end()) {
            it = cache_.emplace(n, std::make_unique<MaxTNull>(n, opts_.mc_trials, opts_.seed, opts_.form)).first;
        }
        return *it->second;
    }

    SignificanceOptions opts_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, std::unique_ptr<MaxTNull>> cache_;
};

struct SegmentOptions {
    double threshold = 0.99;
    TForm form = TForm::Pooled;
};

/// Recursive segmentation of `values`.
///
/// Pending segments are examined in order of their start index. A segment whose best
/// split is not significant is final. A segment whose split fails a neighbor check is
/// parked and examined again once one of its neighbors is cut, since the check
/// compares against the neighbor as it currently stands. The loop ends when no
/// pending segment remains, i.e. when no further cut is acceptable.
inline Segmentation segment(std::span<const double> values, const SignificanceModel& sig,
                            const SegmentOptions& opts = {}) {
    if (!(opts.threshold > 0.0 && opts.threshold < 1.0)) {
        throw std::invalid_argument("segment: threshold must lie in (0, 1)");
    }
    const std::size_t n = values.size();
    Segmentation seg;
    seg.threshold = opts.threshold;
    if (n == 0) {
        seg.boundaries = {0};
        return seg;
    }
    std::set<std::size_t> bounds{0, n};
    std::set<std::size_t> pending{0};  // segment start indices
    std::set<std::size_t> parked;

    auto pair_significant = [&](std::size_t a, std::size_t mid, std::size_t b) {
        const double t = t_statistic(values.subspan(a, b - a), mid - a, opts.form);
        return sig(t, b - a) >= opts.threshold;
    };

    while (!pending.empty()) {
        const std::size_t lo = *pending.begin();
        pending.erase(pending.begin());
        const auto at_lo = bounds.find(lo);
        const std::size_t hi = *std::next(at_lo);

        const auto cand = max_t(values.subspan(lo, hi - lo), opts.form);
        if (!cand) continue;
        if (sig(cand->t_value, hi - lo) < opts.threshold) continue;
        const std::size_t cut = lo + cand->position;

        const bool left_ok = lo == 0 || pair_significant(*std::prev(at_lo), lo, cut);
        const bool right_ok = hi == n || pair_significant(cut, hi, *std::next(bounds.find(hi)));
        if (!left_ok || !right_ok) {
            parked.insert(lo);
            continue;
        }

        bounds.insert(cut);
        pending.insert(lo);
        pending.insert(cut);
        if (lo > 0) {
            const std::size_t left_start = *std::prev(bounds.find(lo));
            if (parked.erase(left_start)) pending.insert(left_start);
        }
        if (hi < n && parked.erase(hi)) pending.insert(hi);
    }
    seg.boundaries.assign(bounds.begin(), bounds.end());
    return seg;
}

inline Segmentation segment(const SignedSeries& series, const SignificanceModel& sig,
                            const SegmentOptions& opts = {}) {
    const auto values = series.values();
    return segment(std::span<const double>(values), sig, opts);
}

}  // namespace patchscale
