#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "patchscale/io.hpp"
#include "patchscale/synth.hpp"

namespace fs = std::filesystem;
using namespace patchscale;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("patchscale_pipeline_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + PATCHSCALE_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

fs::path small_synth_config(const fs::path& dir) {
    SynthConfig c;
    c.n_firms = 40;
    c.packages_per_firm = {15.0, 10};
    const auto path = dir / "synth.json";
    write_text_file(path.string(), synth_config_json(c).dump(2));
    return path;
}

// One firm churning: blocks of ten equal trades alternating B/S within each block.
void write_churn_tape(const fs::path& path, int blocks) {
    std::ofstream out(path);
    out << "timestamp,firm_id,stock_id,side,value\n";
    std::int64_t t = 0;
    for (int p = 0; p < blocks; ++p, t += 1000) {
        for (int i = 0; i < 10; ++i, t += 10) out << t << ",F1,STK," << (i % 2 == 0 ? 'B' : 'S') << ",100\n";
    }
}

// `firms` firms each buying one identical block of ten trades.
void write_identical_tape(const fs::path& path, int firms) {
    std::ofstream out(path);
    out << "timestamp,firm_id,stock_id,side,value\n";
    for (int i = 0; i < 10; ++i) {
        for (int f = 0; f < firms; ++f) out << 10 * i << ",F" << f << ",STK,B,100\n";
    }
}

}  // namespace

TEST(Cli, BadFlagIsUsageError) {
    const auto d = fresh_dir("usage");
    EXPECT_EQ(cli("all --no-such-flag", d / "log"), 1);
    EXPECT_EQ(cli("all --output-dir " + d.string(), d / "log"), 1);
    EXPECT_EQ(cli("", d / "log"), 1);
}

TEST(Cli, MissingInputIsDataError) {
    const auto d = fresh_dir("missing");
    EXPECT_EQ(cli("all --input " + (d / "nope.csv").string() + " --output-dir " + (d / "out").string(), d / "log"), 2);
    EXPECT_TRUE(fs::exists(d / "out" / "FAILED"));
    EXPECT_NE(slurp(d / "out" / "FAILED").find("ingest"), std::string::npos);
}

TEST(Cli, MalformedTapeIsDataError) {
    const auto d = fresh_dir("malformed");
    write_text_file((d / "tape.csv").string(), "timestamp,firm_id,stock_id,side,value\n1,F,S,X,5\n");
    EXPECT_EQ(cli("all --no-activity-filter --input " + (d / "tape.csv").string() + " --output-dir " +
                      (d / "out").string(),
                  d / "log"),
              2);
}

TEST(Cli, DegenerateCloudIsNumericalError) {
    // Identical directional packages put every log point on one spot; no axis exists.
    const auto d = fresh_dir("numerical");
    write_identical_tape(d / "tape.csv", 12);
    EXPECT_EQ(cli("all --no-activity-filter --input " + (d / "tape.csv").string() + " --output-dir " +
                      (d / "out").string(),
                  d / "log"),
              3)
        << slurp(d / "log");
    EXPECT_TRUE(fs::exists(d / "out" / "FAILED"));
}

TEST(Pipeline, ZeroDirectionalPatchesGiveEmptyAnalysis) {
    const auto d = fresh_dir("empty");
    write_churn_tape(d / "tape.csv", 20);
    ASSERT_EQ(cli("all --no-activity-filter --input " + (d / "tape.csv").string() + " --output-dir " +
                      (d / "out").string(),
                  d / "log"),
              0)
        << slurp(d / "log");
    const auto report = read_json_file((d / "out" / "report.json").string());
    EXPECT_TRUE(report.at("empty_analysis").get<bool>());
    const auto& stock = report.at("stocks").at(0);
    EXPECT_EQ(stock.at("counts").at("directional").get<std::size_t>(), 0u);
    for (const auto& t : stock.at("tail_fits")) EXPECT_TRUE(t.contains("empty"));
    EXPECT_TRUE(stock.at("allometry").contains("empty"));
    EXPECT_FALSE(fs::exists(d / "out" / "FAILED"));
}

TEST(Pipeline, RerunsAreByteIdenticalAcrossJobCounts) {
    const auto d = fresh_dir("rerun");
    const auto cfg = small_synth_config(d);
    const std::string base = "all --synth --synth-config " + cfg.string() + " --bootstrap-samples 200";
    ASSERT_EQ(cli(base + " --seed 9 --jobs 1 --output-dir " + (d / "a").string(), d / "log_a"), 0) << slurp(d / "log_a");
    ASSERT_EQ(cli(base + " --seed 9 --jobs 3 --output-dir " + (d / "b").string(), d / "log_b"), 0) << slurp(d / "log_b");
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(d / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), d / "a");
        ASSERT_TRUE(fs::exists(d / "b" / rel)) << rel;
        EXPECT_EQ(slurp(e.path()), slurp(d / "b" / rel)) << rel;
        ++n;
    }
    EXPECT_GT(n, 10u);

    ASSERT_EQ(cli(base + " --seed 10 --output-dir " + (d / "c").string(), d / "log_c"), 0);
    EXPECT_NE(slurp(d / "a" / "report.json"), slurp(d / "c" / "report.json"));
}

TEST(Pipeline, PlotDataIsConsistentWithReport) {
    const auto d = fresh_dir("plots");
    const auto cfg = small_synth_config(d);
    ASSERT_EQ(cli("all --synth --synth-config " + cfg.string() + " --seed 4 --bootstrap-samples 200 --output-dir " +
                      (d / "out").string(),
                  d / "log"),
              0)
        << slurp(d / "log");
    const auto report = read_json_file((d / "out" / "report.json").string());
    const auto& stock = report.at("stocks").at(0);
    ASSERT_FALSE(stock.at("allometry").contains("empty"));

    std::size_t stocks = 0;
    for (const auto& sd : fs::directory_iterator(d / "out" / "plots")) {
        ++stocks;
        for (const char* v : {"T", "N_m", "V_m"}) {
            const auto rows = read_csv(sd.path() / (std::string("ccdf_") + v + ".csv"));
            ASSERT_FALSE(rows.empty()) << v;
            EXPECT_EQ(rows.front()[1], 1.0);
            for (std::size_t i = 1; i < rows.size(); ++i) {
                EXPECT_GT(rows[i][0], rows[i - 1][0]);
                EXPECT_LT(rows[i][1], rows[i - 1][1]);
            }
        }
    }
    EXPECT_EQ(stocks, report.at("stocks").size());

    const auto pdir = d / "out" / "plots" / fs::directory_iterator(d / "out" / "plots")->path().filename();
    for (const char* g : {"g1", "g2", "g3"}) {
        const auto pts = read_csv(pdir / (std::string("scatter_") + g + ".csv"));
        const auto axis = read_csv(pdir / (std::string("axis_") + g + ".csv"));
        ASSERT_EQ(axis.size(), 3u);
        double mx = 0, my = 0;
        for (const auto& p : pts) mx += p[0], my += p[1];
        mx /= static_cast<double>(pts.size());
        my /= static_cast<double>(pts.size());
        EXPECT_NEAR(axis[1][0], mx, 1e-9);
        EXPECT_NEAR(axis[1][1], my, 1e-9);
        const double slope = (axis[2][1] - axis[0][1]) / (axis[2][0] - axis[0][0]);
        // Stocks are sorted in the report as in the plots directory listing only when there is one.
        if (report.at("stocks").size() == 1) {
            EXPECT_NEAR(slope, stock.at("allometry").at("bivariate").at(g).get<double>(), 1e-9);
        }
    }
}
