#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "patchscale/market_data.hpp"

using namespace patchscale;

namespace {

constexpr std::int64_t kJan1_2001 = 978307200;
constexpr std::int64_t kDay = 86400;

std::vector<Trade> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_trades(in);
}

// n trades for `firm` spread round-robin over `days` distinct days starting at `start`.
void add_activity(std::vector<Trade>& out, const std::string& firm, std::int64_t start, std::size_t n,
                  std::size_t days) {
    for (std::size_t i = 0; i < n; ++i) {
        const auto day = static_cast<std::int64_t>(i % days);
        out.push_back({start + day * kDay + static_cast<std::int64_t>(i / days), firm, "TEF",
                       i % 2 ? Side::Buy : Side::Sell, 100.0 + static_cast<double>(i)});
    }
}

}  // namespace

TEST(ParseTrades, MapsFieldsDirectly) {
    auto t = parse("timestamp,firm_id,stock_id,side,value\n1009843200,F01,TEF,B,1500.00\n");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0], (Trade{1009843200, "F01", "TEF", Side::Buy, 1500.0}));
}

TEST(ParseTrades, HeaderOnlyIsEmpty) {
    EXPECT_TRUE(parse("timestamp,firm_id,stock_id,side,value\n").empty());
}

TEST(ParseTrades, NegativeValueNamesTheRow) {
    try {
        parse("timestamp,firm_id,stock_id,side,value\n1,F,S,B,10\n2,F,S,S,-5.0\n");
        FAIL() << "expected a rejection";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(ParseTrades, RejectsMalformedRows) {
    const std::string h = "timestamp,firm_id,stock_id,side,value\n";
    for (const char* row : {"1,F,S,B,0", "1,F,S,X,10", "x,F,S,B,10", "-1,F,S,B,10", "1,,S,B,10", "1,F,S,B",
                            "1,F,S,B,10,extra", "1,F,S,B,1e", "1.5,F,S,B,10"}) {
        EXPECT_THROW(parse(h + row + "\n"), ParseError) << row;
    }
    EXPECT_THROW(parse("time,firm,stock,side,value\n"), ParseError);
}

TEST(ParseTrades, ToleratesCrlf) {
    auto t = parse("timestamp,firm_id,stock_id,side,value\r\n5,F,S,S,2.5\r\n");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0].side, Side::Sell);
    EXPECT_DOUBLE_EQ(t[0].value, 2.5);
}

TEST(ParseTrades, RoundTripIsIdentical) {
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> val(0.01, 1e7);
    std::vector<Trade> trades;
    for (int i = 0; i < 500; ++i) {
        trades.push_back({static_cast<std::int64_t>(eng() % 2000000000), "F" + std::to_string(eng() % 9),
                          "S" + std::to_string(eng() % 3), eng() % 2 ? Side::Buy : Side::Sell, val(eng)});
    }
    std::ostringstream out;
    write_trades(out, trades);
    EXPECT_EQ(parse(out.str()), trades);
}

TEST(FilterActiveFirms, ClearsBothThresholds) {
    std::vector<Trade> t;
    add_activity(t, "A", kJan1_2001, 1200, 250);
    EXPECT_EQ(filter_active_firms(t), (std::set<std::string>{"A"}));
}

TEST(FilterActiveFirms, FailsDayThreshold) {
    std::vector<Trade> t;
    add_activity(t, "A", kJan1_2001, 5000, 50);
    EXPECT_TRUE(filter_active_firms(t).empty());
}

TEST(FilterActiveFirms, EmptyInputGivesEmptySet) { EXPECT_TRUE(filter_active_firms({}).empty()); }

TEST(FilterActiveFirms, EveryYearRuleMatchesBruteForce) {
    // Year 1: A and B both qualify. Year 2: only B qualifies.
    const std::int64_t y2 = kJan1_2001 + 365 * kDay;
    std::vector<Trade> t;
    add_activity(t, "A", kJan1_2001, 1100, 210);
    add_activity(t, "B", kJan1_2001, 1100, 210);
    add_activity(t, "A", y2, 900, 210);
    add_activity(t, "B", y2, 1300, 220);
    add_activity(t, "C", y2, 3000, 300);  // absent in year 1

    // Brute force: per firm and year, count trades and distinct days by hand.
    std::map<std::string, std::map<int, std::pair<std::size_t, std::set<std::int64_t>>>> acc;
    std::set<int> years;
    for (const auto& x : t) {
        const int year = x.timestamp < y2 ? 2001 : 2002;
        years.insert(year);
        auto& cell = acc[x.firm_id][year];
        ++cell.first;
        cell.second.insert(x.timestamp / kDay);
    }
    std::set<std::string> expected;
    for (const auto& [firm, by_year] : acc) {
        bool ok = true;
        for (int y : years) {
            auto it = by_year.find(y);
            ok = ok && it != by_year.end() && it->second.first >= 1000 && it->second.second.size() >= 200;
        }
        if (ok) expected.insert(firm);
    }
    EXPECT_EQ(expected, (std::set<std::string>{"B"}));
    EXPECT_EQ(filter_active_firms(t), expected);
}

TEST(FilterActiveFirms, MonotoneInThresholds) {
    std::mt19937_64 eng(11);
    std::vector<Trade> t;
    for (int f = 0; f < 12; ++f) add_activity(t, "F" + std::to_string(f), kJan1_2001, 200 + eng() % 2000, 20 + eng() % 300);
    std::set<std::string> prev = filter_active_firms(t, {0, 0});
    for (std::size_t k = 1; k < 8; ++k) {
        const ActivityFilter f{k * 300, k * 40};
        const auto cur = filter_active_firms(t, f);
        EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
        // Raising the day threshold alone never adds a firm either.
        const auto base = filter_active_firms(t, {(k - 1) * 300, (k - 1) * 40});
        const auto only_days = filter_active_firms(t, {(k - 1) * 300, k * 40});
        EXPECT_TRUE(std::includes(base.begin(), base.end(), only_days.begin(), only_days.end()));
        prev = cur;
    }
}

TEST(FilterActiveFirms, ProratedModeScalesPartialYears) {
    // Dataset covers only the first ~half of 2001; 600 trades on 110 days.
    std::vector<Trade> t;
    add_activity(t, "A", kJan1_2001, 600, 110);
    add_activity(t, "Z", kJan1_2001 + 180 * kDay, 1, 1);  // stretches the covered span to day 181
    EXPECT_TRUE(filter_active_firms(t, {1000, 200, PartialYearMode::Strict}).empty());
    const auto pro = filter_active_firms(t, {1000, 200, PartialYearMode::Prorated});
    EXPECT_EQ(pro, (std::set<std::string>{"A"}));
}

TEST(FirmActivity, CountsStayInRange) {
    std::vector<Trade> t;
    add_activity(t, "A", kJan1_2001, 5000, 366);
    const auto act = firm_activity(t);
    for (const auto& [firm, a] : act)
        for (const auto& [y, d] : a.active_days_per_year) EXPECT_LE(d, 366u);
}

TEST(BuildSeries, SignConvention) {
    std::vector<Trade> t{{1, "F", "S", Side::Buy, 100}, {2, "F", "S", Side::Sell, 40}};
    const auto s = build_series(t, "F", "S");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.entries[0].timestamp, 1);
    EXPECT_DOUBLE_EQ(s.entries[0].signed_value, 100.0);
    EXPECT_DOUBLE_EQ(s.entries[1].signed_value, -40.0);
}

TEST(BuildSeries, FiltersOtherFirms) {
    std::vector<Trade> t{{1, "F", "S", Side::Buy, 1}, {2, "G", "S", Side::Buy, 2}, {3, "F", "S", Side::Sell, 3},
                         {4, "F", "T", Side::Buy, 4}};
    const auto s = build_series(t, "F", "S");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s.entries[1].signed_value, -3.0);
    EXPECT_TRUE(build_series(t, "nobody", "S").empty());
}

TEST(BuildSeries, SortsAgainstIndependentOracle) {
    std::mt19937_64 eng(3);
    std::vector<Trade> t;
    for (int i = 0; i < 400; ++i)
        t.push_back({static_cast<std::int64_t>(eng() % 50), i % 3 ? "F" : "G", "S", eng() % 2 ? Side::Buy : Side::Sell,
                     static_cast<double>(i + 1)});
    // Oracle: insertion sort by timestamp over the matching rows, stable by construction.
    std::vector<std::pair<std::int64_t, double>> oracle;
    for (const auto& x : t) {
        if (x.firm_id != "F") continue;
        const double v = x.side == Side::Buy ? x.value : -x.value;
        auto pos = oracle.end();
        while (pos != oracle.begin() && std::prev(pos)->first > x.timestamp) --pos;
        oracle.insert(pos, {x.timestamp, v});
    }
    const auto s = build_series(t, "F", "S");
    ASSERT_EQ(s.size(), oracle.size());
    double net = 0, buys = 0, sells = 0;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        EXPECT_EQ(s.entries[i].timestamp, oracle[i].first);
        EXPECT_EQ(s.entries[i].signed_value, oracle[i].second);
        EXPECT_NE(s.entries[i].signed_value, 0.0);
        net += s.entries[i].signed_value;
    }
    for (const auto& x : t)
        if (x.firm_id == "F") (x.side == Side::Buy ? buys : sells) += x.value;
    EXPECT_DOUBLE_EQ(net, buys - sells);
}

TEST(BuildAllSeries, OneSeriesPerKeyRestrictedToFirms) {
    std::vector<Trade> t{{1, "F", "S", Side::Buy, 1}, {2, "G", "S", Side::Buy, 2}, {3, "F", "T", Side::Sell, 3}};
    EXPECT_EQ(build_all_series(t).size(), 3u);
    const std::set<std::string> only{"F"};
    const auto some = build_all_series(t, &only);
    EXPECT_EQ(some.size(), 2u);
    EXPECT_TRUE(some.count({"F", "T"}));
}

TEST(Inventory, PrefixSum) {
    SignedSeries s{"F", "S", {{1, 100}, {2, -40}}};
    const auto inv = inventory(s);
    ASSERT_EQ(inv.size(), 2u);
    EXPECT_DOUBLE_EQ(inv[0].position, 100);
    EXPECT_DOUBLE_EQ(inv[1].position, 60);
    EXPECT_EQ(inv[1].timestamp, 2);
    EXPECT_TRUE(inventory(SignedSeries{}).empty());
}

TEST(Inventory, FinalMatchesIndependentTotal) {
    std::mt19937_64 eng(5);
    std::uniform_int_distribution<int> cents(-100000, 100000);
    SignedSeries s;
    long long total_cents = 0;
    for (int i = 0; i < 1000; ++i) {
        int c = cents(eng);
        if (c == 0) c = 1;
        total_cents += c;
        s.entries.push_back({i, c / 100.0});
    }
    const auto inv = inventory(s);
    EXPECT_NEAR(inv.back().position, static_cast<double>(total_cents) / 100.0, 1e-6);
}
