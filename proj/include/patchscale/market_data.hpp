#pragma once

// Trade tapes: parsing, activity filtering, and per-(firm, stock) signed series.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patchscale/errors.hpp"

namespace patchscale {

enum class Side { Buy, Sell };

struct Trade {
    std::int64_t timestamp = 0;  // seconds since epoch, UTC
    std::string firm_id;
    std::string stock_id;
    Side side = Side::Buy;
    double value = 0.0;  // Euros, > 0

    [[nodiscard]] double signed_value() const noexcept { return side == Side::Buy ? value : -value; }

    friend bool operator==(const Trade&, const Trade&) = default;
};

struct SeriesEntry {
    std::int64_t timestamp = 0;
    double signed_value = 0.0;

    friend bool operator==(const SeriesEntry&, const SeriesEntry&) = default;
};

/// Signed traded value of one firm in one stock, time-ordered (ties in input order).
struct SignedSeries {
    std::string firm_id;
    std::string stock_id;
    std::vector<SeriesEntry> entries;

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries.empty(); }

    [[nodiscard]] std::vector<double> values() const {
        std::vector<double> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.signed_value);
        return out;
    }
};

struct FirmActivity {
    std::string firm_id;
    std::map<int, std::size_t> trades_per_year;
    std::map<int, std::size_t> active_days_per_year;
};

inline constexpr std::string_view kTradeCsvHeader = "timestamp,firm_id,stock_id,side,value";

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::chrono::sys_days day_of(std::int64_t timestamp) {
    using namespace std::chrono;
    return floor<days>(sys_seconds{seconds{timestamp}});
}

inline int year_of(std::int64_t timestamp) {
    return static_cast<int>(std::chrono::year_month_day{day_of(timestamp)}.year());
}

}  // namespace detail

/// Parses one data row. `line_no` is 1-based and counts the header.
inline Trade parse_trade_row(std::string_view row, std::size_t line_no) {
    auto fields = detail::split_csv_line(row);
    if (fields.size() != 5) {
        throw ParseError(line_no, "expected 5 fields, found " + std::to_string(fields.size()));
    }
    Trade t;
    {
        auto f = fields[0];
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), t.timestamp);
        if (ec != std::errc{} || p != f.data() + f.size()) {
            throw ParseError(line_no, "invalid timestamp '" + std::string(f) + "'");
        }
        if (t.timestamp < 0) throw ParseError(line_no, "negative timestamp");
    }
    if (fields[1].empty()) throw ParseError(line_no, "empty firm_id");
    if (fields[2].empty()) throw ParseError(line_no, "empty stock_id");
    t.firm_id = std::string(fields[1]);
    t.stock_id = std::string(fields[2]);
    if (fields[3] == "B") {
        t.side = Side::Buy;
    } else if (fields[3] == "S") {
        t.side = Side::Sell;
    } else {
        throw ParseError(line_no, "side must be B or S, got '" + std::string(fields[3]) + "'");
    }
    {
        auto f = fields[4];
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), t.value, std::chars_format::fixed);
        if (ec != std::errc{} || p != f.data() + f.size() || !std::isfinite(t.value)) {
            throw ParseError(line_no, "invalid value '" + std::string(f) + "'");
        }
        if (t.value <= 0.0) {
            throw ParseError(line_no, "value must be strictly positive, got '" + std::string(f) + "'");
        }
    }
    return t;
}

/// Reads a trade-CSV stream. Rows come back in file order.
inline std::vector<Trade> parse_trades(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "missing header");
    if (detail::strip_cr(line) != kTradeCsvHeader) {
        throw ParseError(1, "unexpected header '" + line + "'");
    }
    std::vector<Trade> trades;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto row = detail::strip_cr(line);
        if (row.empty()) continue;
        trades.push_back(parse_trade_row(row, line_no));
    }
    return trades;
}

inline void write_trades(std::ostream& out, std::span<const Trade> trades) {
    out << kTradeCsvHeader << '\n';
    for (const auto& t : trades) {
        out << t.timestamp << ',' << t.firm_id << ',' << t.stock_id << ','
            << (t.side == Side::Buy ? 'B' : 'S') << ',' << detail::format_double(t.value) << '\n';
    }
}

inline std::map<std::string, FirmActivity> firm_activity(std::span<const Trade> trades) {
    std::map<std::string, FirmActivity> out;
    std::map<std::string, std::set<std::chrono::sys_days>> days;
    for (const auto& t : trades) {
        auto& a = out[t.firm_id];
        a.firm_id = t.firm_id;
        ++a.trades_per_year[detail::year_of(t.timestamp)];
        days[t.firm_id].insert(detail::day_of(t.timestamp));
    }
    for (auto& [firm, dset] : days) {
        auto& a = out[firm];
        for (auto d : dset) {
            ++a.active_days_per_year[static_cast<int>(std::chrono::year_month_day{d}.year())];
        }
    }
    return out;
}

enum class PartialYearMode {
    Strict,    // full thresholds in every year, including partially covered boundary years
    Prorated,  // thresholds scaled by the fraction of each year the dataset covers
};

struct ActivityFilter {
    std::size_t min_trades_per_year = 1000;
    std::size_t min_active_days = 200;
    PartialYearMode partial_years = PartialYearMode::Strict;
};

/// Firms that meet both thresholds in every calendar year the dataset touches.
inline std::set<std::string> filter_active_firms(std::span<const Trade> trades,
                                                 const ActivityFilter& filter = {}) {
    std::set<std::string> kept;
    if (trades.empty()) return kept;

    auto [lo, hi] = std::minmax_element(trades.begin(), trades.end(),
                                        [](const Trade& a, const Trade& b) { return a.timestamp < b.timestamp; });
    const auto first_day = detail::day_of(lo->timestamp);
    const auto last_day = detail::day_of(hi->timestamp);

    auto coverage = [&](int year) {
        if (filter.partial_years == PartialYearMode::Strict) return 1.0;
        using namespace std::chrono;
        const sys_days jan1{std::chrono::year{year} / January / 1};
        const sys_days next_jan1{std::chrono::year{year + 1} / January / 1};
        const auto begin = std::max(jan1, first_day);
        const auto end = std::min(next_jan1, last_day + days{1});
        return static_cast<double>((end - begin).count()) / static_cast<double>((next_jan1 - jan1).count());
    };

    std::set<int> years;
    for (const auto& t : trades) years.insert(detail::year_of(t.timestamp));

    for (const auto& [firm, act] : firm_activity(trades)) {
        bool ok = true;
        for (int y : years) {
            const double f = coverage(y);
            auto count_in = [y](const std::map<int, std::size_t>& m) {
                auto it = m.find(y);
                return it == m.end() ? std::size_t{0} : it->second;
            };
            if (static_cast<double>(count_in(act.trades_per_year)) < f * static_cast<double>(filter.min_trades_per_year) ||
                static_cast<double>(count_in(act.active_days_per_year)) < f * static_cast<double>(filter.min_active_days)) {
                ok = false;
                break;
            }
        }
        if (ok) kept.insert(firm);
    }
    return kept;
}

inline SignedSeries build_series(std::span<const Trade> trades, std::string_view firm_id, std::string_view stock_id) {
    SignedSeries s{std::string(firm_id), std::string(stock_id), {}};
    for (const auto& t : trades) {
        if (t.firm_id == firm_id && t.stock_id == stock_id) s.entries.push_back({t.timestamp, t.signed_value()});
    }
    std::stable_sort(s.entries.begin(), s.entries.end(),
                     [](const SeriesEntry& a, const SeriesEntry& b) { return a.timestamp < b.timestamp; });
    return s;
}

using SeriesKey = std::pair<std::string, std::string>;  // (firm_id, stock_id)

/// All series in one pass, keyed and ordered by (firm_id, stock_id).
/// Firms outside `firms` are dropped when a filter set is given.
inline std::map<SeriesKey, SignedSeries> build_all_series(std::span<const Trade> trades,
                                                          const std::set<std::string>* firms = nullptr) {
    std::map<SeriesKey, SignedSeries> out;
    for (const auto& t : trades) {
        if (firms && !firms->contains(t.firm_id)) continue;
        auto& s = out[{t.firm_id, t.stock_id}];
        if (s.firm_id.empty()) {
            s.firm_id = t.firm_id;
            s.stock_id = t.stock_id;
        }
        s.entries.push_back({t.timestamp, t.signed_value()});
    }
    for (auto& [key, s] : out) {
        std::stable_sort(s.entries.begin(), s.entries.end(),
                         [](const SeriesEntry& a, const SeriesEntry& b) { return a.timestamp < b.timestamp; });
    }
    return out;
}

struct InventoryPoint {
    std::int64_t timestamp = 0;
    double position = 0.0;  // cumulative Euros
};

inline std::vector<InventoryPoint> inventory(const SignedSeries& series) {
    std::vector<InventoryPoint> out;
    out.reserve(series.size());
    double acc = 0.0;
    for (const auto& e : series.entries) {
        acc += e.signed_value;
        out.push_back({e.timestamp, acc});
    }
    return out;
}

}  // namespace patchscale
