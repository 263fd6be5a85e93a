#pragma once

// JSON and CSV exports for every pipeline artifact, plus SynthConfig parsing.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "patchscale/allometry.hpp"
#include "patchscale/errors.hpp"
#include "patchscale/lognorm.hpp"
#include "patchscale/market_data.hpp"
#include "patchscale/segmenter.hpp"
#include "patchscale/synth.hpp"
#include "patchscale/tail_stats.hpp"

namespace patchscale {

using Json = nlohmann::ordered_json;

inline Json to_json(const Interval& iv) { return Json::array({iv.low, iv.high}); }

// ---- segmentation

inline Json segmentation_json(const std::string& firm, const std::string& stock, const Segmentation& seg) {
    return Json{{"firm_id", firm}, {"stock_id", stock}, {"threshold", seg.threshold}, {"boundaries", seg.boundaries}};
}

struct SegmentationRecord {
    std::string firm_id;
    std::string stock_id;
    Segmentation segmentation;
};

inline SegmentationRecord segmentation_from_json(const Json& j) {
    try {
        SegmentationRecord r;
        r.firm_id = j.at("firm_id").get<std::string>();
        r.stock_id = j.at("stock_id").get<std::string>();
        r.segmentation.threshold = j.at("threshold").get<double>();
        r.segmentation.boundaries = j.at("boundaries").get<std::vector<std::size_t>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("segmentation JSON: ") + e.what());
    }
}

// ---- tail fits

inline Json tail_fit_json(const TailFit& f) {
    return Json{{"variable", std::string(to_string(f.variable))},
                {"zeta", f.zeta},
                {"ci95", to_json(f.ci95)},
                {"k", f.k},
                {"x_k", f.x_k},
                {"n", f.n},
                {"convention", "ccdf"}};
}

inline void write_ccdf_csv(std::ostream& out, std::span<const CcdfPoint> pts) {
    out << "x,p\n";
    for (const auto& p : pts) out << detail::format_double(p.x) << ',' << detail::format_double(p.p) << '\n';
}

// ---- allometry

inline Json allometric_fit_json(const AllometricFit& f) {
    const bool tri = f.mode == AllometricFit::Mode::Trivariate;
    return Json{{"mode", tri ? "tri" : "bi"},
                {"g1", f.g1},
                {"g2", f.g2},
                {"g3", f.g3},
                {"ci95s", Json{{"g1", to_json(f.ci95[0])}, {"g2", to_json(f.ci95[1])}, {"g3", to_json(f.ci95[2])}}},
                {"explained_variance", f.explained_variance},
                {"n_points", f.n_points},
                {"B", f.resamples},
                {"seed", f.seed}};
}

inline void write_per_firm_csv(std::ostream& out, const std::map<std::string, FirmExponents>& firms) {
    out << "firm_id,n_patches,g1,g2,g3\n";
    for (const auto& [id, e] : firms) {
        out << id << ',' << e.n_patches << ',' << detail::format_double(e.g1) << ',' << detail::format_double(e.g2)
            << ',' << detail::format_double(e.g3) << '\n';
    }
}

inline Json dispersion_json(const Dispersion& d) {
    return Json{{"mean", d.mean}, {"median", d.median}, {"sd", d.sd}, {"n", d.n}};
}

// ---- lognormality

inline void write_lognormality_csv(std::ostream& out, std::span<const LognormalitySummary> summaries) {
    out << "firm_id,variable,n,jb_stat,critical_value,reject\n";
    for (const auto& s : summaries) {
        for (const auto& r : s.results) {
            out << r.firm_id << ',' << to_string(r.variable) << ',' << r.n << ',' << detail::format_double(r.jb_stat)
                << ',' << detail::format_double(r.critical_value) << ',' << (r.reject ? "true" : "false") << '\n';
        }
    }
}

inline Json lognormality_summary_json(const LognormalitySummary& s) {
    return Json{{"variable", std::string(to_string(s.variable))},
                {"percent_non_rejecting", s.percent_non_rejecting()},
                {"non_rejecting", s.non_rejecting},
                {"tested", s.tested},
                {"degenerate", s.degenerate},
                {"cell", s.table_cell()}};
}

// ---- synth

inline Json synth_config_json(const SynthConfig& c) {
    return Json{
        {"n_firms", c.n_firms},
        {"zipf_exponent", c.zipf_exponent},
        {"stocks", c.stocks},
        {"packages_per_firm", {{"mean", c.packages_per_firm.mean}, {"min", c.packages_per_firm.min}}},
        {"package_value", {{"mu0", c.package_value.mu0}, {"sigma", c.package_value.sigma}}},
        {"execution",
         {{"base_trades", c.execution.base_trades},
          {"trades_exponent", c.execution.trades_exponent},
          {"trades_log_sd", c.execution.trades_log_sd},
          {"child_log_sd", c.execution.child_log_sd},
          {"base_duration", c.execution.base_duration},
          {"duration_exponent", c.execution.duration_exponent},
          {"duration_log_sd", c.execution.duration_log_sd}}},
        {"noise_fraction", c.noise_fraction},
        {"theta_target", c.theta_target},
        {"same_direction_probability", c.same_direction_probability},
        {"gaps",
         {{"idle_mean", c.gaps.idle_mean},
          {"churn_probability", c.gaps.churn_probability},
          {"churn_min", c.gaps.churn_min},
          {"churn_max", c.gaps.churn_max},
          {"churn_spacing", c.gaps.churn_spacing},
          {"churn_value_scale", c.gaps.churn_value_scale},
          {"churn_per_trade", c.gaps.churn_per_trade}}},
        {"start_timestamp", c.start_timestamp},
        {"seed", c.seed}};
}

namespace detail {

template <typename T>
void read_opt(const Json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

/// Fields absent from the document keep their defaults; `"preset": "paper-like"`
/// starts from the calibrated preset instead. Unknown keys are rejected.
inline SynthConfig synth_config_from_json(const Json& j) {
    static const std::vector<std::string> known{"preset", "n_firms", "zipf_exponent", "stocks",
                                                "packages_per_firm", "package_value", "execution", "noise_fraction",
                                                "theta_target", "same_direction_probability", "gaps",
                                                "start_timestamp", "seed"};
    if (!j.is_object()) throw DataError("synth config: expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw DataError("synth config: unknown key '" + key + "'");
    }
    SynthConfig c;
    try {
        if (j.contains("preset")) {
            const auto name = j.at("preset").get<std::string>();
            if (name != "paper-like") throw DataError("synth config: unknown preset '" + name + "'");
            c = paper_like_preset();
        }
        using detail::read_opt;
        read_opt(j, "n_firms", c.n_firms);
        read_opt(j, "zipf_exponent", c.zipf_exponent);
        read_opt(j, "stocks", c.stocks);
        if (j.contains("packages_per_firm")) {
            const auto& p = j.at("packages_per_firm");
            read_opt(p, "mean", c.packages_per_firm.mean);
            read_opt(p, "min", c.packages_per_firm.min);
        }
        if (j.contains("package_value")) {
            const auto& p = j.at("package_value");
            read_opt(p, "mu0", c.package_value.mu0);
            read_opt(p, "sigma", c.package_value.sigma);
        }
        if (j.contains("execution")) {
            const auto& e = j.at("execution");
            read_opt(e, "base_trades", c.execution.base_trades);
            read_opt(e, "trades_exponent", c.execution.trades_exponent);
            read_opt(e, "trades_log_sd", c.execution.trades_log_sd);
            read_opt(e, "child_log_sd", c.execution.child_log_sd);
            read_opt(e, "base_duration", c.execution.base_duration);
            read_opt(e, "duration_exponent", c.execution.duration_exponent);
            read_opt(e, "duration_log_sd", c.execution.duration_log_sd);
        }
        read_opt(j, "noise_fraction", c.noise_fraction);
        read_opt(j, "theta_target", c.theta_target);
        read_opt(j, "same_direction_probability", c.same_direction_probability);
        if (j.contains("gaps")) {
            const auto& g = j.at("gaps");
            read_opt(g, "idle_mean", c.gaps.idle_mean);
            read_opt(g, "churn_probability", c.gaps.churn_probability);
            read_opt(g, "churn_min", c.gaps.churn_min);
            read_opt(g, "churn_max", c.gaps.churn_max);
            read_opt(g, "churn_spacing", c.gaps.churn_spacing);
            read_opt(g, "churn_value_scale", c.gaps.churn_value_scale);
            read_opt(g, "churn_per_trade", c.gaps.churn_per_trade);
        }
        read_opt(j, "start_timestamp", c.start_timestamp);
        read_opt(j, "seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("synth config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    return c;
}

inline Json ground_truth_json(const GroundTruth& t) {
    Json pkgs = Json::array();
    for (const auto& p : t.packages) {
        pkgs.push_back(Json{{"firm_id", p.firm_id},
                            {"stock_id", p.stock_id},
                            {"direction", std::string(to_string(p.direction))},
                            {"V_m", p.value},
                            {"N_m", p.trades},
                            {"T", p.duration},
                            {"noise_value", p.noise_value},
                            {"noise_trades", p.noise_trades},
                            {"start", p.start},
                            {"end", p.end}});
    }
    return Json{{"packages", std::move(pkgs)}};
}

inline GroundTruth ground_truth_from_json(const Json& j) {
    GroundTruth t;
    try {
        for (const auto& p : j.at("packages")) {
            PackageTruth pt;
            pt.firm_id = p.at("firm_id").get<std::string>();
            pt.stock_id = p.at("stock_id").get<std::string>();
            pt.direction = direction_from_string(p.at("direction").get<std::string>());
            pt.value = p.at("V_m").get<double>();
            pt.trades = p.at("N_m").get<std::size_t>();
            pt.duration = p.at("T").get<std::int64_t>();
            pt.noise_value = p.at("noise_value").get<double>();
            pt.noise_trades = p.at("noise_trades").get<std::size_t>();
            pt.start = p.at("start").get<std::size_t>();
            pt.end = p.at("end").get<std::size_t>();
            t.packages.push_back(std::move(pt));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("ground truth JSON: ") + e.what());
    }
    return t;
}

// ---- files

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

inline void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace patchscale
