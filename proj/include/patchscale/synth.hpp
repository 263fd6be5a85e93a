#pragma once

// Synthetic trade tapes with planted packages.
//
// Firm sizes are Pareto (Zipf-like CCDF x^-zipf_exponent, minimum 1). Each firm
// trades packages whose values are lognormal around ln(size) + mu0 with a shared
// sigma, so heterogeneity lives between firms. A package of value V is executed as
// N ~ V^trades_exponent same-sign child trades over T ~ V^duration_exponent
// seconds, with some opposite-sign noise trades mixed in. Packages are separated
// by idle time and, optionally, by short non-directional churn segments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchscale/market_data.hpp"
#include "patchscale/patches.hpp"
#include "patchscale/random.hpp"

namespace patchscale {

struct SynthConfig {
    std::size_t n_firms = 100;
    double zipf_exponent = 1.0;
    std::vector<std::string> stocks{"SYN"};

    struct PackageCount {
        double mean = 20.0;    // Poisson mean
        std::size_t min = 10;  // floor applied after the draw
    } packages_per_firm;

    struct PackageValue {
        double mu0 = 11.512925464970229;  // ln(1e5 EUR) for a size-1 firm
        double sigma = 0.6;
    } package_value;

    struct Execution {
        double base_trades = 30.0;       // median N_m at V = exp(mu0)
        double trades_exponent = 1.0;    // N_m ~ V^trades_exponent
        double trades_log_sd = 0.2;
        double child_log_sd = 0.5;       // spread of child trade values within a package
        double base_duration = 7200.0;   // median T in seconds at V = exp(mu0)
        double duration_exponent = 1.5;  // T ~ V^duration_exponent
        double duration_log_sd = 0.5;
    } execution;

    /// Opposite-sign value injected in a package, as a share of its total traded value
    /// (each package draws its share uniformly in [0, noise_fraction]).
    double noise_fraction = 0.1;
    double theta_target = 0.75;
    /// Chance that a package keeps the direction of the firm's previous package.
    double same_direction_probability = 0.5;

    struct Gaps {
        double idle_mean = 3600.0;        // seconds between packages, exponential
        double churn_probability = 1.0;   // chance of a churn segment between two packages
        std::size_t churn_min = 20;
        std::size_t churn_max = 60;
        double churn_spacing = 60.0;      // mean seconds between churn trades
        double churn_value_scale = 0.2;   // churn trade size relative to the previous package's mean child
        double churn_per_trade = 0.5;     // extra churn trades per trade of the previous package
    } gaps;

    std::int64_t start_timestamp = 978307200;  // 2001-01-01T00:00:00Z
    std::uint64_t seed = 1;

    void validate() const {
        auto fail = [](const std::string& what) { throw std::invalid_argument("synth config: " + what); };
        if (n_firms < 1) fail("n_firms must be >= 1");
        if (!(zipf_exponent > 0)) fail("zipf_exponent must be > 0");
        if (stocks.empty()) fail("stocks must not be empty");
        if (!(packages_per_firm.mean > 0)) fail("packages_per_firm.mean must be > 0");
        if (!(package_value.sigma > 0)) fail("package_value.sigma must be > 0");
        if (!(execution.base_trades >= 1)) fail("execution.base_trades must be >= 1");
        if (!(execution.trades_exponent > 0) || !(execution.duration_exponent > 0)) fail("exponents must be > 0");
        if (execution.trades_log_sd < 0 || execution.child_log_sd < 0 || execution.duration_log_sd < 0)
            fail("log standard deviations must be >= 0");
        if (!(execution.base_duration >= 1)) fail("execution.base_duration must be >= 1 second");
        if (!(theta_target > 0.5 && theta_target <= 1.0)) fail("theta_target must lie in (0.5, 1]");
        if (!(noise_fraction >= 0 && noise_fraction < 1.0 - theta_target))
            fail("noise_fraction must lie in [0, 1 - theta_target)");
        if (!(same_direction_probability >= 0 && same_direction_probability <= 1))
            fail("same_direction_probability must lie in [0,1]");
        if (!(gaps.idle_mean >= 0) || !(gaps.churn_spacing >= 0)) fail("gap parameters must be >= 0");
        if (!(gaps.churn_probability >= 0 && gaps.churn_probability <= 1)) fail("churn_probability must lie in [0,1]");
        if (gaps.churn_min < 1 || gaps.churn_max < gaps.churn_min) fail("need 1 <= churn_min <= churn_max");
        if (!(gaps.churn_value_scale > 0)) fail("churn_value_scale must be > 0");
        if (!(gaps.churn_per_trade >= 0)) fail("churn_per_trade must be >= 0");
        if (start_timestamp < 0) fail("start_timestamp must be >= 0");
    }
};

/// Preset calibrated so the full pipeline lands near the empirical tail exponents
/// (zeta_V ~ 2, zeta_N ~ 1.8, zeta_T ~ 1.3) and allometric slopes (1.1, 1.9, 0.66).
inline SynthConfig paper_like_preset(std::uint64_t seed = 1) {
    SynthConfig c;
    c.n_firms = 1000;
    c.zipf_exponent = 1.9;
    c.packages_per_firm = {15.0, 10};
    c.package_value = {11.512925464970229, 0.45};
    c.execution.base_trades = 30.0;
    c.execution.trades_exponent = 1.1;
    c.execution.trades_log_sd = 0.25;
    c.execution.child_log_sd = 0.5;
    c.execution.base_duration = 7200.0;
    c.execution.duration_exponent = 1.55;
    c.execution.duration_log_sd = 0.7;
    c.noise_fraction = 0.1;
    c.same_direction_probability = 0.2;
    c.seed = seed;
    return c;
}

struct PackagePlan {
    Direction direction = Direction::Buy;
    double value = 0.0;          // planted V_m
    std::size_t trades = 0;      // planted N_m
    std::int64_t duration = 0;   // planted T, seconds
};

struct FirmPlan {
    std::string firm_id;
    std::string stock_id;
    double size = 1.0;
    std::vector<PackagePlan> packages;
};

struct PackageTruth {
    std::string firm_id;
    std::string stock_id;
    Direction direction = Direction::Buy;
    double value = 0.0;         // sum of emitted dominant-side trades, in tape order
    std::size_t trades = 0;     // dominant-side trades
    std::int64_t duration = 0;  // last minus first timestamp of the package
    double noise_value = 0.0;   // sum of emitted opposite-side trades, in tape order
    std::size_t noise_trades = 0;
    std::size_t start = 0;      // [start, end) in the (firm, stock) signed series
    std::size_t end = 0;
};

struct GroundTruth {
    std::vector<PackageTruth> packages;
};

struct SynthMarket {
    std::vector<Trade> trades;  // merged tape, time-ordered, ties in emission order
    GroundTruth truth;
    std::vector<FirmPlan> plans;
};

/// i.i.d. Pareto draws with P(X > x) = x^-zipf_exponent for x >= 1.
inline std::vector<double> gen_firm_sizes(std::size_t n, double zipf_exponent, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_firm_sizes: n must be >= 1");
    if (!(zipf_exponent > 0)) throw std::invalid_argument("gen_firm_sizes: exponent must be > 0");
    Engine eng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& x : out) {
        double u;
        do {
            u = unif(eng);
        } while (u <= 0.0);
        x = std::pow(u, -1.0 / zipf_exponent);
    }
    return out;
}

inline std::vector<PackagePlan> gen_packages(double firm_size, const SynthConfig& cfg, std::uint64_t seed) {
    if (!(firm_size > 0)) throw std::invalid_argument("gen_packages: firm size must be > 0");
    Engine eng(seed);
    std::poisson_distribution<std::size_t> count_dist(cfg.packages_per_firm.mean);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin(0.5);
    std::bernoulli_distribution keep(cfg.same_direction_probability);
    const std::size_t count = std::max(cfg.packages_per_firm.min, count_dist(eng));
    const auto& ex = cfg.execution;
    std::vector<PackagePlan> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto& p = out[i];
        if (i == 0) {
            p.direction = coin(eng) ? Direction::Buy : Direction::Sell;
        } else {
            const Direction prev = out[i - 1].direction;
            p.direction = keep(eng) ? prev : (prev == Direction::Buy ? Direction::Sell : Direction::Buy);
        }
        const double log_rel = std::log(firm_size) + cfg.package_value.sigma * normal(eng);
        p.value = std::exp(cfg.package_value.mu0 + log_rel);
        const double log_n = std::log(ex.base_trades) + ex.trades_exponent * log_rel + ex.trades_log_sd * normal(eng);
        p.trades = static_cast<std::size_t>(std::max(2.0, std::round(std::exp(log_n))));
        const double log_t =
            std::log(ex.base_duration) + ex.duration_exponent * log_rel + ex.duration_log_sd * normal(eng);
        p.duration = static_cast<std::int64_t>(std::max(1.0, std::round(std::exp(log_t))));
    }
    return out;
}

namespace detail {

/// Splits `total` into `parts` lognormal-weighted positive pieces.
inline std::vector<double> split_value(double total, std::size_t parts, double log_sd, Engine& eng) {
    std::normal_distribution<double> normal;
    std::vector<double> w(parts);
    double sum = 0;
    for (auto& x : w) {
        x = std::exp(log_sd * normal(eng));
        sum += x;
    }
    for (auto& x : w) x = total * x / sum;
    return w;
}

/// `count` timestamps in [start, start + duration], sorted, with both ends attained when count >= 2.
inline std::vector<std::int64_t> spread_times(std::int64_t start, std::int64_t duration, std::size_t count,
                                              Engine& eng) {
    std::vector<std::int64_t> ts(count, start);
    if (count >= 2) {
        std::uniform_int_distribution<std::int64_t> at(0, duration);
        ts.back() = start + duration;
        for (std::size_t i = 1; i + 1 < count; ++i) ts[i] = start + at(eng);
        std::sort(ts.begin(), ts.end());
    }
    return ts;
}

}  // namespace detail

/// Expands firm plans into trades. Each (firm, stock) stream is emitted independently from
/// derive_seed(seed, plan index) and then merged by a stable timestamp sort.
inline SynthMarket emit_tape(std::span<const FirmPlan> plans, const SynthConfig& cfg, std::uint64_t seed) {
    SynthMarket market;
    market.plans.assign(plans.begin(), plans.end());
    const auto& gaps = cfg.gaps;

    for (std::size_t pi = 0; pi < plans.size(); ++pi) {
        const auto& plan = plans[pi];
        Engine eng(derive_seed(seed, pi));
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::exponential_distribution<double> idle(gaps.idle_mean > 0 ? 1.0 / gaps.idle_mean : 1.0);
        std::exponential_distribution<double> churn_gap(gaps.churn_spacing > 0 ? 1.0 / gaps.churn_spacing : 1.0);
        std::uniform_int_distribution<std::size_t> churn_len(gaps.churn_min, gaps.churn_max);
        std::bernoulli_distribution coin(0.5);
        std::bernoulli_distribution churn_on(gaps.churn_probability);

        std::int64_t t = cfg.start_timestamp + static_cast<std::int64_t>(unif(eng) * 86400.0);
        std::size_t index = 0;
        auto push = [&](std::int64_t ts, Side side, double value) {
            market.trades.push_back({ts, plan.firm_id, plan.stock_id, side, value});
            ++index;
        };

        for (std::size_t k = 0; k < plan.packages.size(); ++k) {
            const auto& pkg = plan.packages[k];
            if (k > 0) {
                if (gaps.idle_mean > 0) t += static_cast<std::int64_t>(std::ceil(idle(eng)));
                if (churn_on(eng)) {
                    const auto& prev = plan.packages[k - 1];
                    const double typical = gaps.churn_value_scale * prev.value / static_cast<double>(prev.trades);
                    const std::size_t len = churn_len(eng) + static_cast<std::size_t>(std::llround(
                                                                 gaps.churn_per_trade * static_cast<double>(prev.trades)));
                    // Round trips: a buy and a sell of equal value in random order, so no
                    // stretch of churn carries more than two consecutive same-sign trades.
                    for (std::size_t c = 0; c < (len + 1) / 2; ++c) {
                        const double v = typical * std::exp(cfg.execution.child_log_sd * normal(eng));
                        const Side first = coin(eng) ? Side::Buy : Side::Sell;
                        for (Side side : {first, first == Side::Buy ? Side::Sell : Side::Buy}) {
                            push(t, side, v);
                            if (gaps.churn_spacing > 0) t += static_cast<std::int64_t>(std::ceil(churn_gap(eng)));
                        }
                    }
                    if (gaps.idle_mean > 0) t += static_cast<std::int64_t>(std::ceil(idle(eng)));
                }
            }

            const Side dominant = pkg.direction == Direction::Sell ? Side::Sell : Side::Buy;
            const Side opposite = dominant == Side::Buy ? Side::Sell : Side::Buy;
            const double share = cfg.noise_fraction > 0 ? unif(eng) * cfg.noise_fraction : 0.0;
            const double ratio = share / (1.0 - share);
            const auto n_noise = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pkg.trades)));
            auto children = detail::split_value(pkg.value, pkg.trades, cfg.execution.child_log_sd, eng);
            auto noise = n_noise > 0 ? detail::split_value(ratio * pkg.value, n_noise, cfg.execution.child_log_sd, eng)
                                     : std::vector<double>{};
            struct Child {
                Side side;
                double value;
            };
            std::vector<Child> order;
            order.reserve(children.size() + noise.size());
            for (double v : children) order.push_back({dominant, v});
            for (double v : noise) order.push_back({opposite, v});
            std::shuffle(order.begin(), order.end(), eng);
            const auto times = detail::spread_times(t, pkg.duration, order.size(), eng);

            PackageTruth truth;
            truth.firm_id = plan.firm_id;
            truth.stock_id = plan.stock_id;
            truth.direction = pkg.direction;
            truth.start = index;
            for (std::size_t i = 0; i < order.size(); ++i) {
                push(times[i], order[i].side, order[i].value);
                if (order[i].side == dominant) {
                    truth.value += order[i].value;
                    ++truth.trades;
                } else {
                    truth.noise_value += order[i].value;
                    ++truth.noise_trades;
                }
            }
            truth.end = index;
            truth.duration = times.back() - times.front();
            market.truth.packages.push_back(std::move(truth));
            t = times.back();
        }
    }
    std::stable_sort(market.trades.begin(), market.trades.end(),
                     [](const Trade& a, const Trade& b) { return a.timestamp < b.timestamp; });
    return market;
}

inline std::string firm_name(std::size_t index, std::size_t n_firms) {
    std::string digits = std::to_string(index + 1);
    const std::size_t width = std::max<std::size_t>(4, std::to_string(n_firms).size());
    return "F" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

/// Full market from one seed: sizes, per-(firm, stock) package plans, merged tape.
inline SynthMarket generate_market(const SynthConfig& cfg) {
    cfg.validate();
    const auto sizes = gen_firm_sizes(cfg.n_firms, cfg.zipf_exponent, derive_seed(cfg.seed, "firm-sizes"));
    std::vector<FirmPlan> plans;
    const std::uint64_t pkg_seed = derive_seed(cfg.seed, "packages");
    for (std::size_t f = 0; f < cfg.n_firms; ++f) {
        for (std::size_t s = 0; s < cfg.stocks.size(); ++s) {
            FirmPlan plan;
            plan.firm_id = firm_name(f, cfg.n_firms);
            plan.stock_id = cfg.stocks[s];
            plan.size = sizes[f];
            plan.packages = gen_packages(sizes[f], cfg, derive_seed(pkg_seed, f * cfg.stocks.size() + s));
            plans.push_back(std::move(plan));
        }
    }
    return emit_tape(plans, cfg, derive_seed(cfg.seed, "tape"));
}

}  // namespace patchscale
