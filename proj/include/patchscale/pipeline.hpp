#pragma once

// End-to-end orchestration. Each stage reads and writes files in one output
// directory, so any stage can be re-run on its own:
//
//   synth    -> tape.csv, truth.json, synth_config.json
//   ingest   -> trades.csv, ingest.json
//   segment  -> segmentations.json, patches.csv, segment.json
//   analyze  -> analysis/index.json, analysis/<stock>/...
//   report   -> report.json, report_*.csv, plots/<stock>/...
//
// A failing stage leaves a FAILED marker naming itself and the cause.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchscale/allometry.hpp"
#include "patchscale/errors.hpp"
#include "patchscale/io.hpp"
#include "patchscale/lognorm.hpp"
#include "patchscale/market_data.hpp"
#include "patchscale/parallel.hpp"
#include "patchscale/patches.hpp"
#include "patchscale/random.hpp"
#include "patchscale/segmenter.hpp"
#include "patchscale/synth.hpp"
#include "patchscale/tail_stats.hpp"

namespace patchscale {

namespace fs = std::filesystem;

inline constexpr const char* kReportSchema = "patchscale.report";
inline constexpr int kReportSchemaVersion = 1;

/// Smallest sample on which the allometric fits are attempted.
inline constexpr std::size_t kMinAllometryPoints = 10;

struct RunConfig {
    std::string tape_path;          // ingest input
    std::string synth_config_path;  // synth input; empty means the built-in preset
    std::string output_dir = "out";

    double threshold = 0.99;
    SignificanceMode significance_mode = SignificanceMode::ClosedForm;
    std::size_t mc_trials = 10000;

    double theta = 0.75;
    std::size_t min_patch_trades = 10;
    std::size_t min_firm_patches = 10;

    KPolicy k;
    bool hill_bootstrap_ci = false;
    std::size_t bootstrap_samples = 1000;

    bool activity_filter = true;
    ActivityFilter activity;

    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    /// Range checks only; paths are checked by the stage that opens them.
    void validate() const {
        auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
        if (!(threshold > 0.0 && threshold < 1.0)) fail("--threshold must lie in (0, 1)");
        if (mc_trials < 100) fail("--mc-trials must be >= 100");
        if (!(theta > 0.5 && theta <= 1.0)) fail("--theta must lie in (0.5, 1]");
        if (min_patch_trades < 1) fail("--min-patch-trades must be >= 1");
        if (min_firm_patches < kJbMinSample) fail("--min-firm-patches must be >= 8");
        if (bootstrap_samples < 200) fail("--bootstrap-samples must be >= 200");
        if (jobs < 1) fail("--jobs must be >= 1");
        if (output_dir.empty()) fail("--output-dir must not be empty");
    }

    [[nodiscard]] SignificanceOptions significance() const {
        SignificanceOptions o;
        o.mode = significance_mode;
        o.mc_trials = mc_trials;
        o.seed = derive_seed(seed, "significance");
        return o;
    }

    [[nodiscard]] PatchOptions patch_options() const { return {theta, min_patch_trades}; }
};

/// Error raised by a stage; carries the stage name and the original cause.
class StageError : public std::runtime_error {
public:
    enum class Kind { Usage, Data, Numerical };
    StageError(std::string stage, Kind kind, const std::string& cause)
        : std::runtime_error(stage + ": " + cause), stage_(std::move(stage)), kind_(kind) {}
    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }
    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    std::string stage_;
    Kind kind_;
};

namespace detail {

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("missing artifact " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

inline std::string safe_name(const std::string& id) {
    std::string s = id;
    for (auto& c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        if (!ok) c = '_';
    }
    if (s.empty() || s == "." || s == "..") s = "_" + s;
    return s;
}

inline const char* mode_name(SignificanceMode m) {
    return m == SignificanceMode::ClosedForm ? "closed-form" : "monte-carlo";
}

template <typename F>
auto run_stage(const std::string& stage, const fs::path& dir, F&& body) -> decltype(body()) {
    const auto marker = dir / "FAILED";
    std::error_code ec;
    fs::remove(marker, ec);
    auto fail = [&](StageError::Kind kind, const std::string& cause) {
        std::error_code ignore;
        fs::create_directories(dir, ignore);
        std::ofstream(marker) << Json{{"stage", stage}, {"error", cause}}.dump(2) << '\n';
        return StageError(stage, kind, cause);
    };
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const NumericalError& e) {
        throw fail(StageError::Kind::Numerical, e.what());
    } catch (const DataError& e) {
        throw fail(StageError::Kind::Data, e.what());
    } catch (const std::invalid_argument& e) {
        throw fail(StageError::Kind::Usage, e.what());
    } catch (const std::exception& e) {
        throw fail(StageError::Kind::Data, e.what());
    }
}

inline Json empty_marker(const std::string& reason) { return Json{{"empty", true}, {"reason", reason}}; }

}  // namespace detail

// ---- synth

inline Json run_synth(const SynthConfig& cfg, const fs::path& dir) {
    return detail::run_stage("synth", dir, [&] {
        fs::create_directories(dir);
        const auto market = generate_market(cfg);
        {
            std::ofstream out(dir / "tape.csv", std::ios::binary);
            if (!out) throw DataError("cannot write " + (dir / "tape.csv").string());
            write_trades(out, market.trades);
        }
        write_json_file((dir / "truth.json").string(), ground_truth_json(market.truth));
        write_json_file((dir / "synth_config.json").string(), synth_config_json(cfg));
        return Json{{"trades", market.trades.size()}, {"packages", market.truth.packages.size()},
                    {"firms", cfg.n_firms}};
    });
}

// ---- ingest

inline Json run_ingest(const RunConfig& cfg) {
    const fs::path dir = cfg.output_dir;
    return detail::run_stage("ingest", dir, [&] {
        cfg.validate();
        if (cfg.tape_path.empty()) throw std::invalid_argument("no input tape given");
        const auto text = detail::read_file(cfg.tape_path);
        std::istringstream in(text);
        const auto trades = parse_trades(in);

        std::set<std::string> all_firms;
        for (const auto& t : trades) all_firms.insert(t.firm_id);
        const auto active = cfg.activity_filter ? filter_active_firms(trades, cfg.activity) : all_firms;

        std::vector<Trade> kept;
        kept.reserve(trades.size());
        for (const auto& t : trades)
            if (active.count(t.firm_id)) kept.push_back(t);

        fs::create_directories(dir);
        {
            std::ofstream out(dir / "trades.csv", std::ios::binary);
            if (!out) throw DataError("cannot write " + (dir / "trades.csv").string());
            write_trades(out, kept);
        }
        Json filter = cfg.activity_filter
                          ? Json{{"enabled", true},
                                 {"min_trades_per_year", cfg.activity.min_trades_per_year},
                                 {"min_active_days", cfg.activity.min_active_days},
                                 {"partial_years",
                                  cfg.activity.partial_years == PartialYearMode::Strict ? "strict" : "prorated"}}
                          : Json{{"enabled", false}};
        Json summary{{"input_fnv1a64", detail::hex64(stream_id(text))},
                     {"trades_read", trades.size()},
                     {"firms_read", all_firms.size()},
                     {"activity_filter", filter},
                     {"firms_kept", active.size()},
                     {"trades_kept", kept.size()}};
        write_json_file((dir / "ingest.json").string(), summary);
        return summary;
    });
}

// ---- segment

inline Json run_segment(const RunConfig& cfg) {
    const fs::path dir = cfg.output_dir;
    return detail::run_stage("segment", dir, [&] {
        cfg.validate();
        const auto text = detail::read_file(dir / "trades.csv");
        std::istringstream in(text);
        const auto trades = parse_trades(in);
        const auto by_key = build_all_series(trades);
        std::vector<const SignedSeries*> series;
        for (const auto& [key, s] : by_key) series.push_back(&s);

        const SignificanceModel sig(cfg.significance());
        const SegmentOptions seg_opts{cfg.threshold, TForm::Pooled};
        std::vector<Segmentation> segs(series.size());
        parallel_for(series.size(), cfg.jobs, [&](std::size_t i) { segs[i] = segment(*series[i], sig, seg_opts); });

        Json seg_json = Json::array();
        std::vector<PatchRow> rows;
        std::size_t directional = 0;
        for (std::size_t i = 0; i < series.size(); ++i) {
            seg_json.push_back(segmentation_json(series[i]->firm_id, series[i]->stock_id, segs[i]));
            for (const auto& p : cut_patches(*series[i], segs[i])) {
                const auto d = classify(p, cfg.theta);
                if (d != Direction::NonDirectional) ++directional;
                rows.push_back({p, d});
            }
        }
        write_json_file((dir / "segmentations.json").string(), seg_json);
        {
            std::ofstream out(dir / "patches.csv", std::ios::binary);
            if (!out) throw DataError("cannot write " + (dir / "patches.csv").string());
            write_patch_rows(out, rows);
        }
        Json summary{{"series", series.size()},
                     {"trades", trades.size()},
                     {"threshold", cfg.threshold},
                     {"significance",
                      {{"mode", detail::mode_name(cfg.significance_mode)},
                       {"small_n_cutoff", cfg.significance().small_n_cutoff},
                       {"mc_trials", cfg.mc_trials},
                       {"seed", cfg.significance().seed}}},
                     {"t_form", "pooled"},
                     {"theta", cfg.theta},
                     {"patches", rows.size()},
                     {"directional", directional},
                     {"non_directional", rows.size() - directional}};
        write_json_file((dir / "segment.json").string(), summary);
        return summary;
    });
}

// ---- analyze

namespace detail {

inline Json tail_section(std::vector<double> xs, Variable var, const RunConfig& cfg, const std::string& stock) {
    const std::size_t min_n = cfg.k.kind == KPolicy::Kind::Auto ? kMinAutoSample : 2;
    if (xs.size() < min_n) {
        return empty_marker("n = " + std::to_string(xs.size()) + " is too small for k policy " + cfg.k.describe());
    }
    const auto k = choose_k(xs, cfg.k);
    auto fit = hill(xs, k, var);
    Json j = tail_fit_json(fit);
    j["k_policy"] = cfg.k.describe();
    if (cfg.hill_bootstrap_ci) {
        const auto ci = hill_bootstrap_ci(xs, k, cfg.bootstrap_samples,
                                          derive_seed(cfg.seed, "hill:" + stock + ":" + std::string(to_string(var))));
        j["ci95"] = to_json(ci);
        j["ci_method"] = "bootstrap";
    } else {
        j["ci_method"] = "asymptotic";
    }
    return j;
}

}  // namespace detail

inline Json run_analyze(const RunConfig& cfg) {
    const fs::path dir = cfg.output_dir;
    return detail::run_stage("analyze", dir, [&] {
        cfg.validate();
        const auto text = detail::read_file(dir / "patches.csv");
        std::istringstream in(text);
        const auto rows = read_patch_rows(in);

        std::map<std::string, std::vector<const PatchRow*>> by_stock;
        for (const auto& r : rows) by_stock[r.patch.stock_id].push_back(&r);

        const fs::path adir = dir / "analysis";
        fs::create_directories(adir);
        Json index{{"theta", cfg.theta},
                   {"min_patch_trades", cfg.min_patch_trades},
                   {"min_firm_patches", cfg.min_firm_patches},
                   {"k_policy", cfg.k.describe()},
                   {"hill_ci", cfg.hill_bootstrap_ci ? "bootstrap" : "asymptotic"},
                   {"bootstrap_samples", cfg.bootstrap_samples},
                   {"seed", cfg.seed},
                   {"stocks", Json::array()}};
        std::set<std::string> used_names;

        for (const auto& [stock, stock_rows] : by_stock) {
            const auto name = detail::safe_name(stock);
            if (!used_names.insert(name).second) throw DataError("stock ids collide after sanitizing: " + stock);
            const fs::path sdir = adir / name;
            fs::create_directories(sdir);

            std::size_t non_directional = 0, short_directional = 0, zero_duration = 0;
            std::set<std::string> firms;
            std::vector<DirectionalPatch> dps;
            for (const auto* r : stock_rows) {
                firms.insert(r->patch.firm_id);
                if (r->direction == Direction::NonDirectional) {
                    ++non_directional;
                } else if (r->patch.trade_count() < cfg.min_patch_trades) {
                    ++short_directional;
                } else {
                    dps.push_back(make_directional(r->patch, r->direction));
                }
            }

            std::vector<double> T, N, V;
            std::map<std::string, std::vector<double>> fT, fN, fV;
            std::map<std::string, std::vector<LogPoint>> fpts;
            for (const auto& d : dps) {
                const auto& firm = d.patch.firm_id;
                N.push_back(static_cast<double>(d.dominant_trades));
                V.push_back(d.dominant_value);
                fN[firm].push_back(N.back());
                fV[firm].push_back(V.back());
                if (d.duration > 0) {
                    T.push_back(d.duration);
                    fT[firm].push_back(d.duration);
                    fpts[firm].push_back({std::log(d.duration), std::log(N.back()), std::log(V.back())});
                } else {
                    ++zero_duration;
                }
            }
            const auto lp = log_points(dps);

            Json counts{{"firms", firms.size()},
                        {"patches", stock_rows.size()},
                        {"non_directional", non_directional},
                        {"directional_below_min_trades", short_directional},
                        {"directional", dps.size()},
                        {"zero_duration", zero_duration},
                        {"log_points", lp.points.size()}};

            // Tail exponents and CCDF data.
            Json tails = Json::array();
            const std::array<std::pair<Variable, const std::vector<double>*>, 3> vars{
                {{Variable::Duration, &T}, {Variable::TradeCount, &N}, {Variable::TradedValue, &V}}};
            for (const auto& [var, xs] : vars) {
                auto j = detail::tail_section(*xs, var, cfg, stock);
                if (j.contains("empty")) j["variable"] = std::string(to_string(var));
                tails.push_back(std::move(j));
            }
            write_json_file((sdir / "tail_fits.json").string(), tails);

            // Allometry.
            Json allometry;
            std::map<std::string, FirmExponents> per_firm;
            if (lp.points.size() < kMinAllometryPoints) {
                allometry = detail::empty_marker("fewer than " + std::to_string(kMinAllometryPoints) +
                                                 " patches with T > 0");
            } else {
                const auto seed = derive_seed(cfg.seed, "bootstrap:" + stock);
                const auto bi = fit_bivariate(lp.points, cfg.bootstrap_samples, seed, cfg.jobs);
                const auto tri = fit_trivariate(lp.points, cfg.bootstrap_samples, seed, cfg.jobs);
                per_firm = per_firm_exponents(fpts, cfg.min_firm_patches);
                std::vector<double> g1s, g2s, g3s;
                for (const auto& [f, e] : per_firm) {
                    g1s.push_back(e.g1);
                    g2s.push_back(e.g2);
                    g3s.push_back(e.g3);
                }
                allometry = Json{{"bivariate", allometric_fit_json(bi)},
                                 {"trivariate", allometric_fit_json(tri)},
                                 {"bi_minus_tri", {{"g1", bi.g1 - tri.g1}, {"g2", bi.g2 - tri.g2}, {"g3", bi.g3 - tri.g3}}},
                                 {"per_firm",
                                  {{"firms", per_firm.size()},
                                   {"g1", dispersion_json(dispersion(g1s))},
                                   {"g2", dispersion_json(dispersion(g2s))},
                                   {"g3", dispersion_json(dispersion(g3s))}}}};
            }
            write_json_file((sdir / "allometry.json").string(), allometry);
            {
                std::ofstream out(sdir / "per_firm_exponents.csv", std::ios::binary);
                write_per_firm_csv(out, per_firm);
            }

            // Lognormality, per firm and pooled.
            std::vector<LognormalitySummary> summaries;
            Json per_firm_ln = Json::array();
            Json pooled_ln = Json::array();
            const std::array<std::pair<Variable, const std::map<std::string, std::vector<double>>*>, 3> fvars{
                {{Variable::Duration, &fT}, {Variable::TradeCount, &fN}, {Variable::TradedValue, &fV}}};
            for (std::size_t i = 0; i < 3; ++i) {
                const auto [var, groups] = fvars[i];
                const auto vname = std::string(to_string(var));
                const std::size_t min_n = std::max(cfg.min_firm_patches, kJbMinSample);
                const bool any = std::any_of(groups->begin(), groups->end(),
                                             [&](const auto& kv) { return kv.second.size() >= min_n; });
                Json cell;
                if (!any) {
                    cell = detail::empty_marker("no firm with " + std::to_string(min_n) + " or more patches");
                } else {
                    try {
                        summaries.push_back(per_firm_lognormality(*groups, var, cfg.min_firm_patches));
                        cell = lognormality_summary_json(summaries.back());
                    } catch (const DataError& e) {
                        cell = detail::empty_marker(e.what());
                    }
                }
                cell["variable"] = vname;
                per_firm_ln.push_back(std::move(cell));

                const auto& pooled = *vars[i].second;
                Json p;
                if (pooled.size() < kJbMinSample) {
                    p = detail::empty_marker("fewer than 8 patches");
                } else {
                    try {
                        const auto jb = lognormality_test(pooled);
                        p = Json{{"n", pooled.size()},
                                 {"jb_stat", jb.statistic},
                                 {"critical_value", jb.critical_value},
                                 {"reject", jb.reject}};
                    } catch (const NumericalError& e) {
                        p = detail::empty_marker(e.what());
                    }
                }
                p["variable"] = vname;
                pooled_ln.push_back(std::move(p));
            }
            {
                std::ofstream out(sdir / "lognormality.csv", std::ios::binary);
                write_lognormality_csv(out, summaries);
            }
            write_json_file((sdir / "lognormality_summary.json").string(),
                            Json{{"per_firm", per_firm_ln}, {"pooled", pooled_ln}});
            write_json_file((sdir / "counts.json").string(), counts);

            index["stocks"].push_back(Json{{"stock_id", stock}, {"dir", name}});
        }
        if (by_stock.empty()) index["empty"] = true;
        write_json_file((adir / "index.json").string(), index);
        return index;
    });
}

// ---- plot data

namespace detail {

inline void write_histogram(const fs::path& path, std::vector<double> xs, std::size_t bins = 20) {
    std::ofstream out(path, std::ios::binary);
    out << "bin_low,bin_high,count\n";
    if (xs.empty()) return;
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
        out << format_double(lo) << ',' << format_double(hi) << ',' << xs.size() << '\n';
        return;
    }
    std::vector<std::size_t> counts(bins, 0);
    const double w = (hi - lo) / static_cast<double>(bins);
    for (double x : xs) counts[std::min(bins - 1, static_cast<std::size_t>((x - lo) / w))]++;
    for (std::size_t b = 0; b < bins; ++b) {
        out << format_double(lo + w * static_cast<double>(b)) << ','
            << format_double(b + 1 == bins ? hi : lo + w * static_cast<double>(b + 1)) << ',' << counts[b] << '\n';
    }
}

inline std::map<std::string, FirmExponents> read_per_firm_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    if (strip_cr(line) != "firm_id,n_patches,g1,g2,g3") throw DataError(path.string() + ": unexpected header");
    std::map<std::string, FirmExponents> out;
    while (std::getline(in, line)) {
        auto row = strip_cr(line);
        if (row.empty()) continue;
        auto f = split_csv_line(row);
        if (f.size() != 5) throw DataError(path.string() + ": expected 5 fields");
        FirmExponents e;
        e.n_patches = std::stoul(std::string(f[1]));
        e.g1 = std::stod(std::string(f[2]));
        e.g2 = std::stod(std::string(f[3]));
        e.g3 = std::stod(std::string(f[4]));
        out.emplace(std::string(f[0]), e);
    }
    return out;
}

}  // namespace detail

/// Writes CCDF, scatter, principal-axis and per-firm histogram files for every
/// analyzed stock; returns the list of files written (relative to the output dir).
inline std::vector<std::string> emit_plot_data(const fs::path& dir) {
    const auto index = Json::parse(detail::read_file(dir / "analysis" / "index.json"));
    const auto min_patch_trades = index.at("min_patch_trades").get<std::size_t>();
    std::istringstream in(detail::read_file(dir / "patches.csv"));
    const auto rows = read_patch_rows(in);
    std::vector<std::string> written;
    for (const auto& s : index.at("stocks")) {
        const auto stock = s.at("stock_id").get<std::string>();
        const auto name = s.at("dir").get<std::string>();
        const auto allometry = Json::parse(detail::read_file(dir / "analysis" / name / "allometry.json"));
        const fs::path pdir = dir / "plots" / name;
        fs::create_directories(pdir);

        std::vector<DirectionalPatch> dps;
        for (const auto& r : rows) {
            if (r.patch.stock_id != stock || r.direction == Direction::NonDirectional) continue;
            if (r.patch.trade_count() < min_patch_trades) continue;
            dps.push_back(make_directional(r.patch, r.direction));
        }
        std::vector<double> T, N, V;
        for (const auto& d : dps) {
            if (d.duration > 0) T.push_back(d.duration);
            N.push_back(static_cast<double>(d.dominant_trades));
            V.push_back(d.dominant_value);
        }
        for (const auto& [label, xs] : {std::pair{"T", &T}, {"N_m", &N}, {"V_m", &V}}) {
            const auto file = pdir / (std::string("ccdf_") + label + ".csv");
            std::ofstream out(file, std::ios::binary);
            if (xs->empty()) {
                out << "x,p\n";
            } else {
                write_ccdf_csv(out, ccdf(*xs));
            }
            written.push_back(fs::relative(file, dir).generic_string());
        }

        const auto lp = log_points(dps);
        const std::array<std::pair<Pair, const char*>, 3> pairs{
            {{Pair::ValueTrades, "g1"}, {Pair::ValueDuration, "g2"}, {Pair::DurationTrades, "g3"}}};
        const bool fitted = !allometry.contains("empty");
        for (const auto& [pair, g] : pairs) {
            const auto pts = project(lp.points, pair);
            {
                const auto file = pdir / (std::string("scatter_") + g + ".csv");
                std::ofstream out(file, std::ios::binary);
                out << "log_x,log_y\n";
                for (const auto& p : pts) out << detail::format_double(p.u) << ',' << detail::format_double(p.v) << '\n';
                written.push_back(fs::relative(file, dir).generic_string());
            }
            const auto file = pdir / (std::string("axis_") + g + ".csv");
            std::ofstream out(file, std::ios::binary);
            out << "log_x,log_y\n";
            if (fitted && !pts.empty()) {
                // Principal axis through the centroid, drawn across the x range of the points.
                const double slope = allometry.at("bivariate").at(g).get<double>();
                double mu = 0, mv = 0, lo = pts.front().u, hi = pts.front().u;
                for (const auto& p : pts) {
                    mu += p.u;
                    mv += p.v;
                    lo = std::min(lo, p.u);
                    hi = std::max(hi, p.u);
                }
                mu /= static_cast<double>(pts.size());
                mv /= static_cast<double>(pts.size());
                for (double x : {lo, mu, hi})
                    out << detail::format_double(x) << ',' << detail::format_double(mv + slope * (x - mu)) << '\n';
            }
            written.push_back(fs::relative(file, dir).generic_string());
        }

        const auto firms = detail::read_per_firm_csv(dir / "analysis" / name / "per_firm_exponents.csv");
        for (const char* g : {"g1", "g2", "g3"}) {
            std::vector<double> xs;
            for (const auto& [f, e] : firms) xs.push_back(g[1] == '1' ? e.g1 : g[1] == '2' ? e.g2 : e.g3);
            const auto file = pdir / (std::string("per_firm_hist_") + g + ".csv");
            detail::write_histogram(file, xs);
            written.push_back(fs::relative(file, dir).generic_string());
        }
    }
    return written;
}

// ---- report

namespace detail {

inline std::string num(const Json& j) {
    if (!j.is_number()) return "";
    return format_double(j.get<double>());
}

}  // namespace detail

inline Json run_report(const RunConfig& cfg) {
    const fs::path dir = cfg.output_dir;
    return detail::run_stage("report", dir, [&] {
        cfg.validate();
        const auto index = Json::parse(detail::read_file(dir / "analysis" / "index.json"));
        const auto seg = Json::parse(detail::read_file(dir / "segment.json"));
        Json ingest = fs::exists(dir / "ingest.json") ? Json::parse(detail::read_file(dir / "ingest.json")) : Json();

        Json report{{"schema", kReportSchema},
                    {"version", kReportSchemaVersion},
                    {"tail_convention", "ccdf: P(X >= x) ~ x^-zeta; density exponent zeta + 1"},
                    {"notes", Json::array({"N_m is discrete and treated as continuous in the Hill estimator",
                                           "non-directional patches are exported but excluded from statistics"})}};
        Json settings{{"threshold", seg.at("threshold")}, {"significance", seg.at("significance")}};
        for (const auto& [key, value] : index.items())
            if (key != "stocks" && key != "empty") settings[key] = value;
        report["settings"] = settings;
        if (!ingest.is_null()) report["ingest"] = ingest;
        report["segmentation"] = Json{{"series", seg.at("series")},
                                      {"trades", seg.at("trades")},
                                      {"patches", seg.at("patches")},
                                      {"directional", seg.at("directional")},
                                      {"non_directional", seg.at("non_directional")}};

        std::ostringstream tail_csv, allo_csv, ln_csv, table_csv;
        tail_csv << "stock_id,variable,zeta,ci_low,ci_high,k,x_k,n\n";
        allo_csv << "stock_id,mode,exponent,value,ci_low,ci_high,explained_variance\n";
        ln_csv << "stock_id,variable,percent_non_rejecting,non_rejecting,tested,cell,pooled_jb,pooled_critical,pooled_reject\n";
        table_csv << "stock_id,zeta_T,zeta_N_m,zeta_V_m,g1,g2,g3,g1_tri,g2_tri,g3_tri,lognormal_T,lognormal_N_m,lognormal_V_m\n";

        Json stocks = Json::array();
        std::size_t sum_patches = 0;
        for (const auto& s : index.at("stocks")) {
            const auto stock = s.at("stock_id").get<std::string>();
            const fs::path sdir = dir / "analysis" / s.at("dir").get<std::string>();
            const auto counts = Json::parse(detail::read_file(sdir / "counts.json"));
            const auto tails = Json::parse(detail::read_file(sdir / "tail_fits.json"));
            const auto allometry = Json::parse(detail::read_file(sdir / "allometry.json"));
            const auto ln = Json::parse(detail::read_file(sdir / "lognormality_summary.json"));

            const auto patches = counts.at("patches").get<std::size_t>();
            const auto directional = counts.at("directional").get<std::size_t>();
            const auto non_dir = counts.at("non_directional").get<std::size_t>();
            const auto short_dir = counts.at("directional_below_min_trades").get<std::size_t>();
            if (patches != directional + non_dir + short_dir) throw DataError(stock + ": patch counts do not reconcile");
            sum_patches += patches;

            if (!allometry.contains("empty")) {
                const auto& tri = allometry.at("trivariate");
                const double g1 = tri.at("g1").get<double>(), g2 = tri.at("g2").get<double>(),
                             g3 = tri.at("g3").get<double>();
                if (std::abs(g1 - g2 * g3) > 1e-12 * std::max(1.0, std::abs(g1)))
                    throw NumericalError(stock + ": trivariate g1 != g2*g3");
            }

            Json diagnostics{{"non_directional_share",
                              patches == 0 ? 0.0 : static_cast<double>(non_dir) / static_cast<double>(patches)},
                             {"skipped_zero_duration", counts.at("zero_duration")},
                             {"directional_below_min_trades", short_dir}};
            stocks.push_back(Json{{"stock_id", stock},
                                  {"counts", counts},
                                  {"diagnostics", diagnostics},
                                  {"tail_fits", tails},
                                  {"allometry", allometry},
                                  {"lognormality", ln}});

            std::array<std::string, 3> zetas, cells;
            for (std::size_t i = 0; i < 3; ++i) {
                const auto& t = tails.at(i);
                if (!t.contains("empty")) {
                    zetas[i] = detail::num(t.at("zeta"));
                    tail_csv << stock << ',' << t.at("variable").get<std::string>() << ',' << zetas[i] << ','
                             << detail::num(t.at("ci95").at(0)) << ',' << detail::num(t.at("ci95").at(1)) << ','
                             << t.at("k").get<std::size_t>() << ',' << detail::num(t.at("x_k")) << ','
                             << t.at("n").get<std::size_t>() << '\n';
                }
                const auto& pf = ln.at("per_firm").at(i);
                const auto& po = ln.at("pooled").at(i);
                if (!pf.contains("empty")) cells[i] = pf.at("cell").get<std::string>();
                ln_csv << stock << ',' << pf.at("variable").get<std::string>() << ','
                       << (pf.contains("empty") ? "" : detail::num(pf.at("percent_non_rejecting"))) << ','
                       << (pf.contains("empty") ? "" : std::to_string(pf.at("non_rejecting").get<std::size_t>()))
                       << ',' << (pf.contains("empty") ? "" : std::to_string(pf.at("tested").get<std::size_t>()))
                       << ',' << cells[i] << ','
                       << (po.contains("empty") ? "" : detail::num(po.at("jb_stat"))) << ','
                       << (po.contains("empty") ? "" : detail::num(po.at("critical_value"))) << ','
                       << (po.contains("empty") ? "" : (po.at("reject").get<bool>() ? "true" : "false")) << '\n';
            }
            std::array<std::string, 6> gs;
            if (!allometry.contains("empty")) {
                for (const char* mode : {"bivariate", "trivariate"}) {
                    const auto& f = allometry.at(mode);
                    const bool tri = std::string(mode) == "trivariate";
                    for (std::size_t i = 0; i < 3; ++i) {
                        const std::string g = "g" + std::to_string(i + 1);
                        gs[(tri ? 3 : 0) + i] = detail::num(f.at(g));
                        const auto& ev = f.at("explained_variance");
                        allo_csv << stock << ',' << f.at("mode").get<std::string>() << ',' << g << ','
                                 << gs[(tri ? 3 : 0) + i] << ',' << detail::num(f.at("ci95s").at(g).at(0)) << ','
                                 << detail::num(f.at("ci95s").at(g).at(1)) << ','
                                 << detail::num(ev.at(tri ? 0 : i)) << '\n';
                    }
                }
            }
            table_csv << stock;
            for (const auto& z : zetas) table_csv << ',' << z;
            for (const auto& g : gs) table_csv << ',' << g;
            for (const auto& c : cells) table_csv << ",\"" << c << '"';
            table_csv << '\n';
        }
        if (sum_patches != seg.at("patches").get<std::size_t>())
            throw DataError("patch counts in analysis do not match the segmentation summary");
        report["stocks"] = stocks;
        if (stocks.empty() || std::all_of(stocks.begin(), stocks.end(), [](const Json& s) {
                return s.at("counts").at("directional").get<std::size_t>() == 0;
            })) {
            report["empty_analysis"] = true;
        }

        write_json_file((dir / "report.json").string(), report);
        write_text_file((dir / "report_tail_fits.csv").string(), tail_csv.str());
        write_text_file((dir / "report_allometry.csv").string(), allo_csv.str());
        write_text_file((dir / "report_lognormality.csv").string(), ln_csv.str());
        write_text_file((dir / "report_table.csv").string(), table_csv.str());
        emit_plot_data(dir);
        return report;
    });
}

}  // namespace patchscale
