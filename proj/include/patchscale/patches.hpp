#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "patchscale/errors.hpp"
#include "patchscale/market_data.hpp"
#include "patchscale/segmenter.hpp"

namespace patchscale {

enum class Direction { Buy, Sell, NonDirectional };

inline std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::Buy: return "buy";
        case Direction::Sell: return "sell";
        case Direction::NonDirectional: return "none";
    }
    return "none";
}

inline Direction direction_from_string(std::string_view s) {
    if (s == "buy") return Direction::Buy;
    if (s == "sell") return Direction::Sell;
    if (s == "none") return Direction::NonDirectional;
    throw DataError("unknown direction '" + std::string(s) + "'");
}

/// Aggregates of one segment [start, end) of a signed series.
struct Patch {
    std::string firm_id;
    std::string stock_id;
    std::size_t start = 0;
    std::size_t end = 0;
    double buy_value = 0.0;   // V_b
    double sell_value = 0.0;  // V_s
    double total_value = 0.0; // V = V_b + V_s
    std::size_t n_buy = 0;
    std::size_t n_sell = 0;
    std::int64_t t_first = 0;
    std::int64_t t_last = 0;

    [[nodiscard]] std::size_t trade_count() const noexcept { return end - start; }
};

/// A patch whose dominant side carries more than a fraction theta of its value.
struct DirectionalPatch {
    Patch patch;
    Direction direction = Direction::Buy;
    double duration = 0.0;            // T, seconds between first and last trade
    std::size_t dominant_trades = 0;  // N_m
    double dominant_value = 0.0;      // V_m
};

inline std::vector<Patch> cut_patches(const SignedSeries& series, const Segmentation& seg) {
    const auto& b = seg.boundaries;
    if (b.empty() || b.front() != 0 || b.back() != series.size()) {
        throw std::invalid_argument("cut_patches: boundaries do not span the series");
    }
    std::vector<Patch> out;
    out.reserve(b.size() - 1);
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        if (b[i] >= b[i + 1]) throw std::invalid_argument("cut_patches: boundaries must increase strictly");
        Patch p;
        p.firm_id = series.firm_id;
        p.stock_id = series.stock_id;
        p.start = b[i];
        p.end = b[i + 1];
        for (std::size_t j = p.start; j < p.end; ++j) {
            const double v = series.entries[j].signed_value;
            if (v > 0) {
                p.buy_value += v;
                ++p.n_buy;
            } else {
                p.sell_value -= v;
                ++p.n_sell;
            }
        }
        p.total_value = p.buy_value + p.sell_value;
        p.t_first = series.entries[p.start].timestamp;
        p.t_last = series.entries[p.end - 1].timestamp;
        out.push_back(std::move(p));
    }
    return out;
}

inline void check_theta(double theta) {
    if (!(theta > 0.5 && theta <= 1.0)) throw std::invalid_argument("theta must lie in (0.5, 1]");
}

/// Buy iff V_b/V > theta, Sell iff V_s/V > theta (strict), otherwise NonDirectional.
inline Direction classify(const Patch& p, double theta = 0.75) {
    check_theta(theta);
    if (!(p.total_value > 0.0)) return Direction::NonDirectional;
    if (p.buy_value / p.total_value > theta) return Direction::Buy;
    if (p.sell_value / p.total_value > theta) return Direction::Sell;
    return Direction::NonDirectional;
}

inline DirectionalPatch make_directional(const Patch& p, Direction d) {
    DirectionalPatch dp;
    dp.patch = p;
    dp.direction = d;
    dp.duration = static_cast<double>(p.t_last - p.t_first);
    if (d == Direction::Buy) {
        dp.dominant_trades = p.n_buy;
        dp.dominant_value = p.buy_value;
    } else {
        dp.dominant_trades = p.n_sell;
        dp.dominant_value = p.sell_value;
    }
    return dp;
}

struct PatchOptions {
    double theta = 0.75;
    std::size_t min_trades = 10;  // total trades in the patch, both sides
};

inline std::vector<DirectionalPatch> directional_patches(std::span<const Patch> patches,
                                                         const PatchOptions& opts = {}) {
    check_theta(opts.theta);
    std::vector<DirectionalPatch> out;
    for (const auto& p : patches) {
        if (p.trade_count() < opts.min_trades) continue;
        const auto d = classify(p, opts.theta);
        if (d == Direction::NonDirectional) continue;
        out.push_back(make_directional(p, d));
    }
    return out;
}

inline std::vector<DirectionalPatch> directional_patches(const SignedSeries& series, const Segmentation& seg,
                                                         const PatchOptions& opts = {}) {
    const auto patches = cut_patches(series, seg);
    return directional_patches(std::span<const Patch>(patches), opts);
}

// Patch export: firm_id,stock_id,start,end,direction,T,N_m,V_m,V_b,V_s
// Non-directional rows leave N_m and V_m empty.

inline constexpr std::string_view kPatchCsvHeader = "firm_id,stock_id,start,end,direction,T,N_m,V_m,V_b,V_s";

struct PatchRow {
    Patch patch;
    Direction direction = Direction::NonDirectional;
};

inline void write_patch_rows(std::ostream& out, std::span<const PatchRow> rows) {
    out << kPatchCsvHeader << '\n';
    for (const auto& r : rows) {
        const auto& p = r.patch;
        out << p.firm_id << ',' << p.stock_id << ',' << p.start << ',' << p.end << ',' << to_string(r.direction)
            << ',' << (p.t_last - p.t_first) << ',';
        if (r.direction != Direction::NonDirectional) {
            const auto dp = make_directional(p, r.direction);
            out << dp.dominant_trades << ',' << detail::format_double(dp.dominant_value);
        } else {
            out << ',';
        }
        out << ',' << detail::format_double(p.buy_value) << ',' << detail::format_double(p.sell_value) << '\n';
    }
}

/// Reads a patch export back. Per-side trade counts and t_first are not part of the
/// format: directional rows restore the dominant-side count and T (t_first = 0), which
/// is all analysis needs; non-directional rows keep only values, range and T.
inline std::vector<PatchRow> read_patch_rows(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line) != kPatchCsvHeader) {
        throw ParseError(1, "unexpected patch CSV header");
    }
    std::vector<PatchRow> out;
    std::size_t line_no = 1;
    auto to_u64 = [&](std::string_view f) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc{} || p != f.data() + f.size()) throw ParseError(line_no, "bad integer '" + std::string(f) + "'");
        return v;
    };
    auto to_double = [&](std::string_view f) {
        double v = 0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc{} || p != f.data() + f.size() || !(v >= 0.0))
            throw ParseError(line_no, "bad value '" + std::string(f) + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        auto row = detail::strip_cr(line);
        if (row.empty()) continue;
        auto f = detail::split_csv_line(row);
        if (f.size() != 10) throw ParseError(line_no, "expected 10 fields");
        PatchRow r;
        try {
            r.direction = direction_from_string(f[4]);
        } catch (const DataError& e) {
            throw ParseError(line_no, e.what());
        }
        auto& p = r.patch;
        p.firm_id = std::string(f[0]);
        p.stock_id = std::string(f[1]);
        p.start = to_u64(f[2]);
        p.end = to_u64(f[3]);
        if (p.end <= p.start) throw ParseError(line_no, "empty patch range");
        p.t_last = static_cast<std::int64_t>(to_u64(f[5]));
        p.buy_value = to_double(f[8]);
        p.sell_value = to_double(f[9]);
        p.total_value = p.buy_value + p.sell_value;
        if (r.direction != Direction::NonDirectional) {
            const auto dominant = to_u64(f[6]);
            if (dominant > p.trade_count()) throw ParseError(line_no, "N_m exceeds the patch length");
            (r.direction == Direction::Buy ? p.n_buy : p.n_sell) = dominant;
            (r.direction == Direction::Buy ? p.n_sell : p.n_buy) = p.trade_count() - dominant;
        } else if (!f[6].empty() || !f[7].empty()) {
            throw ParseError(line_no, "non-directional row carries N_m or V_m");
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<DirectionalPatch> read_directional_patches(std::istream& in, std::size_t* non_directional = nullptr) {
    std::vector<DirectionalPatch> out;
    std::size_t skipped = 0;
    for (const auto& r : read_patch_rows(in)) {
        if (r.direction == Direction::NonDirectional) {
            ++skipped;
            continue;
        }
        out.push_back(make_directional(r.patch, r.direction));
    }
    if (non_directional) *non_directional = skipped;
    return out;
}

}  // namespace patchscale
