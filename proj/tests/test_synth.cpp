#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "patchscale/io.hpp"
#include "patchscale/lognorm.hpp"
#include "patchscale/patches.hpp"
#include "patchscale/segmenter.hpp"
#include "patchscale/synth.hpp"
#include "patchscale/tail_stats.hpp"

using namespace patchscale;

namespace {

SynthConfig small_config(std::uint64_t seed = 3) {
    SynthConfig c;
    c.n_firms = 40;
    c.packages_per_firm = {12.0, 10};
    c.seed = seed;
    return c;
}

}  // namespace

TEST(FirmSizes, ZipfOneRecoveredByHill) {
    const auto sizes = gen_firm_sizes(10000, 1.0, 77);
    EXPECT_TRUE(std::all_of(sizes.begin(), sizes.end(), [](double s) { return s >= 1.0; }));
    const double z = hill(sizes, 1000).zeta;
    EXPECT_GE(z, 0.9);
    EXPECT_LE(z, 1.1);
}

TEST(FirmSizes, SingleFirmAndDeterminism) {
    const auto one = gen_firm_sizes(1, 1.5, 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_GE(one[0], 1.0);
    EXPECT_EQ(gen_firm_sizes(500, 1.3, 9), gen_firm_sizes(500, 1.3, 9));
    EXPECT_NE(gen_firm_sizes(500, 1.3, 9), gen_firm_sizes(500, 1.3, 10));
    EXPECT_THROW(gen_firm_sizes(0, 1.0, 1), std::invalid_argument);
}

TEST(Packages, VanishingSigmaGivesOneValuePerFirm) {
    auto c = small_config();
    c.package_value.sigma = 1e-12;
    const auto pkgs = gen_packages(4.0, c, 5);
    ASSERT_GE(pkgs.size(), 10u);
    for (const auto& p : pkgs) EXPECT_NEAR(p.value, std::exp(c.package_value.mu0) * 4.0, 1e-6 * p.value);
}

TEST(Packages, DirectionPersistence) {
    auto c = small_config();
    c.packages_per_firm = {2000.0, 10};
    c.same_direction_probability = 0.0;
    auto pkgs = gen_packages(1.0, c, 6);
    for (std::size_t i = 1; i < pkgs.size(); ++i) EXPECT_NE(pkgs[i].direction, pkgs[i - 1].direction);
    c.same_direction_probability = 1.0;
    pkgs = gen_packages(1.0, c, 6);
    for (std::size_t i = 1; i < pkgs.size(); ++i) EXPECT_EQ(pkgs[i].direction, pkgs[0].direction);
}

TEST(Market, DeterministicForFixedSeed) {
    const auto a = generate_market(small_config(11));
    const auto b = generate_market(small_config(11));
    EXPECT_EQ(a.trades, b.trades);
    EXPECT_EQ(ground_truth_json(a.truth), ground_truth_json(b.truth));
    EXPECT_NE(generate_market(small_config(12)).trades, a.trades);
}

TEST(Market, TapeIsTimeOrderedAndTruthIndexesSeries) {
    const auto m = generate_market(small_config());
    EXPECT_TRUE(std::is_sorted(m.trades.begin(), m.trades.end(),
                               [](const Trade& x, const Trade& y) { return x.timestamp < y.timestamp; }));
    const auto series = build_all_series(m.trades);
    for (const auto& t : m.truth.packages) {
        const auto& s = series.at({t.firm_id, t.stock_id});
        ASSERT_LE(t.end, s.size());
        ASSERT_LT(t.start, t.end);
        EXPECT_EQ(s.entries[t.end - 1].timestamp - s.entries[t.start].timestamp, t.duration);
    }
}

TEST(Market, ConservationPerPackage) {
    const auto m = generate_market(small_config());
    const auto series = build_all_series(m.trades);
    for (const auto& t : m.truth.packages) {
        const auto& s = series.at({t.firm_id, t.stock_id});
        double dom = 0, opp = 0;
        std::size_t n_dom = 0, n_opp = 0;
        for (std::size_t i = t.start; i < t.end; ++i) {
            const double v = s.entries[i].signed_value;
            const bool is_dom = (v > 0) == (t.direction == Direction::Buy);
            (is_dom ? dom : opp) += std::abs(v);
            ++(is_dom ? n_dom : n_opp);
        }
        EXPECT_EQ(dom, t.value);
        EXPECT_EQ(opp, t.noise_value);
        EXPECT_EQ(n_dom, t.trades);
        EXPECT_EQ(n_opp, t.noise_trades);
    }
}

TEST(Market, PlantedPackagesStayDirectional) {
    for (double noise : {0.0, 0.2}) {
        auto c = small_config();
        c.noise_fraction = noise;
        const auto m = generate_market(c);
        for (const auto& t : m.truth.packages) {
            Patch p;
            (t.direction == Direction::Buy ? p.buy_value : p.sell_value) = t.value;
            (t.direction == Direction::Buy ? p.sell_value : p.buy_value) = t.noise_value;
            p.total_value = p.buy_value + p.sell_value;
            EXPECT_EQ(classify(p, 0.75), t.direction);
            if (noise == 0.0) {
                EXPECT_EQ(t.noise_trades, 0u);
                EXPECT_EQ(t.noise_value, 0.0);
            }
        }
    }
}

TEST(Market, PerFirmValuesLognormalPooledHeavyTailed) {
    auto c = small_config(21);
    c.n_firms = 400;
    c.zipf_exponent = 1.5;
    c.package_value.sigma = 0.5;
    const auto m = generate_market(c);
    std::map<std::string, std::vector<double>> by_firm;
    std::vector<double> pooled;
    for (const auto& t : m.truth.packages) {
        by_firm[t.firm_id].push_back(t.value);
        pooled.push_back(t.value);
    }
    EXPECT_GE(per_firm_lognormality(by_firm, Variable::TradedValue).percent_non_rejecting(), 90.0);
    EXPECT_TRUE(lognormality_test(pooled).reject);
    const double z = hill(pooled, choose_k(pooled)).zeta;
    EXPECT_NEAR(z, 1.5, 0.35);
}

TEST(Market, SegmentationRecoversPlantedBoundaries) {
    // Well-separated regime: alternating directions, no churn, light noise.
    SynthConfig c;
    c.n_firms = 20;
    c.packages_per_firm = {15.0, 10};
    c.same_direction_probability = 0.0;
    c.gaps.churn_probability = 0.0;
    c.noise_fraction = 0.05;
    c.execution.child_log_sd = 0.3;
    c.seed = 31;
    const auto m = generate_market(c);
    const auto series = build_all_series(m.trades);
    const SignificanceModel sig{SignificanceOptions{.seed = 1}};
    std::map<SeriesKey, std::vector<std::size_t>> bounds;
    for (const auto& [key, s] : series) bounds[key] = segment(s, sig).boundaries;

    std::size_t total = 0, found = 0;
    for (const auto& t : m.truth.packages) {
        const auto& b = bounds.at({t.firm_id, t.stock_id});
        const double tol = 0.1 * static_cast<double>(t.end - t.start);
        for (std::size_t edge : {t.start, t.end}) {
            ++total;
            found += std::any_of(b.begin(), b.end(), [&](std::size_t x) {
                return std::abs(static_cast<double>(x) - static_cast<double>(edge)) <= tol;
            });
        }
    }
    EXPECT_GE(static_cast<double>(found) / static_cast<double>(total), 0.9) << found << "/" << total;

    // A detected patch whose range equals a planted package's range reproduces its
    // direction, V_m, N_m and T exactly.
    std::size_t matched = 0, close = 0;
    for (const auto& [key, s] : series) {
        Segmentation seg{bounds.at(key), 0.99};
        for (const auto& d : directional_patches(s, seg)) {
            for (const auto& t : m.truth.packages) {
                if (t.firm_id != key.first || t.start != d.patch.start || t.end != d.patch.end) continue;
                ++matched;
                close += d.direction == t.direction && std::abs(d.dominant_value / t.value - 1.0) < 1e-9 &&
                         d.dominant_trades == t.trades && d.duration == static_cast<double>(t.duration);
            }
        }
    }
    EXPECT_GE(matched, total / 4);
    EXPECT_EQ(close, matched);
}

TEST(Config, ValidationRejectsBadValues) {
    auto bad = [](auto mutate) {
        SynthConfig c;
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](SynthConfig& c) { c.noise_fraction = 0.25; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](SynthConfig& c) { c.package_value.sigma = 0; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](SynthConfig& c) { c.zipf_exponent = -1; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](SynthConfig& c) { c.stocks.clear(); }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](SynthConfig& c) { c.gaps.churn_max = 1; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](SynthConfig& c) { c.same_direction_probability = 1.5; }).validate(), std::invalid_argument);
    EXPECT_NO_THROW(SynthConfig{}.validate());
    EXPECT_NO_THROW(paper_like_preset(4).validate());
}

TEST(Config, JsonRoundTripAndPreset) {
    auto c = paper_like_preset(8);
    c.stocks = {"AAA", "BBB"};
    c.gaps.churn_per_trade = 0.25;
    const auto j = synth_config_json(c);
    EXPECT_EQ(synth_config_json(synth_config_from_json(j)), j);

    const auto preset = synth_config_from_json(Json{{"preset", "paper-like"}, {"seed", 5}});
    EXPECT_EQ(preset.n_firms, paper_like_preset().n_firms);
    EXPECT_EQ(preset.seed, 5u);
    const auto partial = synth_config_from_json(Json{{"execution", {{"trades_exponent", 1.3}}}});
    EXPECT_EQ(partial.execution.trades_exponent, 1.3);
    EXPECT_EQ(partial.n_firms, SynthConfig{}.n_firms);

    EXPECT_THROW(synth_config_from_json(Json{{"n_frims", 3}}), DataError);
    EXPECT_THROW(synth_config_from_json(Json{{"preset", "other"}}), DataError);
    EXPECT_THROW(synth_config_from_json(Json{{"noise_fraction", 0.9}}), DataError);
    EXPECT_THROW(synth_config_from_json(Json{{"n_firms", "many"}}), DataError);
    EXPECT_THROW(synth_config_from_json(Json::array()), DataError);
}

TEST(Config, GroundTruthJsonRoundTrip) {
    const auto m = generate_market(small_config());
    const auto j = ground_truth_json(m.truth);
    EXPECT_EQ(ground_truth_json(ground_truth_from_json(j)), j);
    EXPECT_THROW(ground_truth_from_json(Json{{"packages", Json::array({Json{{"firm_id", "F"}}})}}), DataError);
}
