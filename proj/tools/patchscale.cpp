// patchscale: hidden-order patch detection and scaling analysis.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical/degenerate-data error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "patchscale/io.hpp"
#include "patchscale/lognorm.hpp"
#include "patchscale/pipeline.hpp"
#include "patchscale/synth.hpp"

namespace ps = patchscale;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Flag values as given on the command line; unset ones fall back to --config, then defaults.
struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<double> threshold;
    std::optional<std::string> significance_mode;
    std::optional<std::size_t> mc_trials;
    std::optional<double> theta;
    std::optional<std::size_t> min_patch_trades;
    std::optional<std::string> k;
    std::optional<std::string> hill_ci;
    std::optional<std::size_t> bootstrap_samples;
    std::optional<std::size_t> min_firm_patches;
    std::optional<std::size_t> min_trades_per_year;
    std::optional<std::size_t> min_active_days;
    std::optional<std::string> partial_years;
    bool no_activity_filter = false;
    std::optional<std::string> input;
    std::optional<std::string> synth_config;
    std::optional<std::string> preset;
    bool synth = false;
};

void add_run_flags(CLI::App* app, Flags& f, bool segment, bool analyze) {
    app->add_option("--config", f.config, "JSON file with run settings (keys are flag names)");
    app->add_option("--output-dir", f.output_dir, "Artifact directory (default: out)");
    app->add_option("--seed", f.seed, "Top-level seed; every stage seed derives from it");
    app->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
    if (segment) {
        app->add_option("--threshold", f.threshold, "Segmentation significance threshold (default 0.99)");
        app->add_option("--significance-mode", f.significance_mode, "closed-form or monte-carlo")
            ->check(CLI::IsMember({"closed-form", "monte-carlo"}));
        app->add_option("--mc-trials", f.mc_trials, "Monte Carlo trials for the max-t null (default 10000)");
        app->add_option("--theta", f.theta, "Directional threshold on V_b/V or V_s/V (default 0.75)");
    }
    if (analyze) {
        app->add_option("--min-patch-trades", f.min_patch_trades, "Minimum trades per patch (default 10)");
        app->add_option("--k", f.k, "Hill tail size: auto, fraction:<f>, fixed:<k> (default auto)");
        app->add_option("--hill-ci", f.hill_ci, "asymptotic or bootstrap")
            ->check(CLI::IsMember({"asymptotic", "bootstrap"}));
        app->add_option("--bootstrap-samples", f.bootstrap_samples, "Bootstrap resamples (default 1000)");
        app->add_option("--min-firm-patches", f.min_firm_patches, "Minimum patches per firm (default 10)");
    }
}

void add_ingest_flags(CLI::App* app, Flags& f) {
    app->add_option("--min-trades-per-year", f.min_trades_per_year, "Activity filter (default 1000)");
    app->add_option("--min-active-days", f.min_active_days, "Activity filter (default 200)");
    app->add_option("--partial-years", f.partial_years, "strict or prorated")
        ->check(CLI::IsMember({"strict", "prorated"}));
    app->add_flag("--no-activity-filter", f.no_activity_filter, "Keep every firm");
}

template <typename T>
void take(const ps::Json& j, const char* key, std::optional<T>& dst) {
    if (!dst && j.contains(key)) dst = j.at(key).get<T>();
}

/// Merges --config into unset flags, then builds the run configuration.
ps::RunConfig resolve(Flags& f, bool synthetic_input) {
    if (f.config) {
        const auto j = ps::read_json_file(*f.config);
        if (!j.is_object()) throw ps::DataError(*f.config + ": expected a JSON object");
        try {
            take(j, "output-dir", f.output_dir);
            take(j, "seed", f.seed);
            take(j, "jobs", f.jobs);
            take(j, "threshold", f.threshold);
            take(j, "significance-mode", f.significance_mode);
            take(j, "mc-trials", f.mc_trials);
            take(j, "theta", f.theta);
            take(j, "min-patch-trades", f.min_patch_trades);
            take(j, "k", f.k);
            take(j, "hill-ci", f.hill_ci);
            take(j, "bootstrap-samples", f.bootstrap_samples);
            take(j, "min-firm-patches", f.min_firm_patches);
            take(j, "min-trades-per-year", f.min_trades_per_year);
            take(j, "min-active-days", f.min_active_days);
            take(j, "partial-years", f.partial_years);
            take(j, "input", f.input);
            take(j, "synth-config", f.synth_config);
            if (j.contains("no-activity-filter") && j.at("no-activity-filter").get<bool>()) f.no_activity_filter = true;
        } catch (const nlohmann::json::exception& e) {
            throw ps::DataError(*f.config + ": " + e.what());
        }
    }
    ps::RunConfig c;
    if (f.output_dir) c.output_dir = *f.output_dir;
    if (f.seed) c.seed = *f.seed;
    if (f.jobs) c.jobs = *f.jobs;
    if (f.threshold) c.threshold = *f.threshold;
    if (f.significance_mode) {
        if (*f.significance_mode == "closed-form") c.significance_mode = ps::SignificanceMode::ClosedForm;
        else if (*f.significance_mode == "monte-carlo") c.significance_mode = ps::SignificanceMode::MonteCarlo;
        else throw std::invalid_argument("--significance-mode must be closed-form or monte-carlo");
    }
    if (f.mc_trials) c.mc_trials = *f.mc_trials;
    if (f.theta) c.theta = *f.theta;
    if (f.min_patch_trades) c.min_patch_trades = *f.min_patch_trades;
    if (f.k) c.k = ps::KPolicy::parse(*f.k);
    if (f.hill_ci) {
        if (*f.hill_ci != "asymptotic" && *f.hill_ci != "bootstrap")
            throw std::invalid_argument("--hill-ci must be asymptotic or bootstrap");
        c.hill_bootstrap_ci = *f.hill_ci == "bootstrap";
    }
    if (f.bootstrap_samples) c.bootstrap_samples = *f.bootstrap_samples;
    if (f.min_firm_patches) c.min_firm_patches = *f.min_firm_patches;
    if (f.min_trades_per_year) c.activity.min_trades_per_year = *f.min_trades_per_year;
    if (f.min_active_days) c.activity.min_active_days = *f.min_active_days;
    if (f.partial_years) {
        if (*f.partial_years != "strict" && *f.partial_years != "prorated")
            throw std::invalid_argument("--partial-years must be strict or prorated");
        c.activity.partial_years =
            *f.partial_years == "strict" ? ps::PartialYearMode::Strict : ps::PartialYearMode::Prorated;
    }
    // Synthetic tapes span weeks, so the per-year activity filter is off unless asked for.
    const bool filter_given = f.min_trades_per_year || f.min_active_days;
    c.activity_filter = !f.no_activity_filter && (!synthetic_input || filter_given);
    if (f.input) c.tape_path = *f.input;
    if (f.synth_config) c.synth_config_path = *f.synth_config;
    c.validate();
    return c;
}

ps::SynthConfig synth_config(const Flags& f, const ps::RunConfig& run) {
    ps::SynthConfig s;
    if (!run.synth_config_path.empty()) {
        s = ps::synth_config_from_json(ps::read_json_file(run.synth_config_path));
    } else if (!f.preset || *f.preset == "paper-like") {
        s = ps::paper_like_preset();
    }
    if (f.seed) s.seed = run.seed;
    return s;
}

void print(const ps::Json& j) { std::cout << j.dump(2) << '\n'; }

int exit_code(ps::StageError::Kind k) {
    switch (k) {
        case ps::StageError::Kind::Usage: return kUsage;
        case ps::StageError::Kind::Data: return kData;
        case ps::StageError::Kind::Numerical: return kNumerical;
    }
    return kData;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hidden-order patch detection and scaling analysis of broker trade tapes"};
    app.require_subcommand(1);

    Flags f;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic tape with ground truth");
    synth->add_option("--config", f.synth_config, "SynthConfig JSON (default: paper-like preset)");
    synth->add_option("--preset", f.preset, "Built-in preset")->check(CLI::IsMember({"paper-like", "default"}));
    synth->add_option("--output-dir", f.output_dir, "Artifact directory (default: out)");
    synth->add_option("--seed", f.seed, "Generator seed");

    auto* ingest = app.add_subcommand("ingest", "Parse a trade tape and keep active firms");
    ingest->add_option("--input", f.input, "Trade CSV")->required();
    add_run_flags(ingest, f, false, false);
    add_ingest_flags(ingest, f);

    auto* segment = app.add_subcommand("segment", "Segment every (firm, stock) series into patches");
    add_run_flags(segment, f, true, false);

    auto* analyze = app.add_subcommand("analyze", "Tail exponents, allometry and lognormality");
    add_run_flags(analyze, f, false, true);

    auto* report = app.add_subcommand("report", "Assemble report.json, CSV tables and plot data");
    add_run_flags(report, f, false, true);

    auto* all = app.add_subcommand("all", "Run every stage on a tape or on a synthetic market");
    auto* all_input = all->add_option("--input", f.input, "Trade CSV");
    auto* all_synth = all->add_flag("--synth", f.synth, "Generate the input with the synth stage");
    all->add_option("--synth-config", f.synth_config, "SynthConfig JSON for --synth (default: paper-like preset)");
    all_input->excludes(all_synth);
    add_run_flags(all, f, true, true);
    add_ingest_flags(all, f);

    std::size_t jb_trials = 200000;
    std::uint64_t jb_seed = 20011231;
    auto* jb = app.add_subcommand("jb-table", "Print small-sample Jarque-Bera 95% critical values");
    jb->add_option("--trials", jb_trials, "Monte Carlo trials per n");
    jb->add_option("--seed", jb_seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*jb) {
            for (std::size_t n = ps::kJbMinSample; n < ps::kJbAsymptoticFrom; ++n) {
                std::printf("    %.4f,  // n=%zu\n", ps::jb_critical_value_mc(n, jb_trials, jb_seed), n);
            }
            return kOk;
        }
        if (*synth) {
            ps::RunConfig run;
            if (f.output_dir) run.output_dir = *f.output_dir;
            if (f.seed) run.seed = *f.seed;
            if (f.synth_config) run.synth_config_path = *f.synth_config;
            print(ps::run_synth(synth_config(f, run), run.output_dir));
            return kOk;
        }
        if (*ingest) {
            print(ps::run_ingest(resolve(f, false)));
            return kOk;
        }
        if (*segment) {
            print(ps::run_segment(resolve(f, false)));
            return kOk;
        }
        if (*analyze) {
            print(ps::run_analyze(resolve(f, false)));
            return kOk;
        }
        if (*report) {
            const auto run = resolve(f, false);
            ps::run_report(run);
            std::cout << "wrote " << (std::filesystem::path(run.output_dir) / "report.json").string() << '\n';
            return kOk;
        }
        if (*all) {
            if (!f.synth && !f.input) throw std::invalid_argument("all: give --input <tape.csv> or --synth");
            auto run = resolve(f, f.synth);
            if (f.synth) {
                ps::run_synth(synth_config(f, run), run.output_dir);
                run.tape_path = (std::filesystem::path(run.output_dir) / "tape.csv").string();
            }
            ps::run_ingest(run);
            ps::run_segment(run);
            ps::run_analyze(run);
            ps::run_report(run);
            std::cout << "wrote " << (std::filesystem::path(run.output_dir) / "report.json").string() << '\n';
            return kOk;
        }
    } catch (const ps::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const ps::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const ps::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
