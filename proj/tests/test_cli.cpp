#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lipfd/model_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;  // stdout and stderr together
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lipfd_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Run run_cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cli.log";
    const std::string cmd = std::string("\"") + LIPFD_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(log);
    return r;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
}

}  // namespace

TEST(Cli, NonPositiveLambdaIsAConfigError) {
    const auto dir = scratch("lambda");
    write_text(dir / "run.json", R"({"version": 1, "synthesis": {"lambda": 0.0}})");
    const auto r = run_cli("synth --config \"" + (dir / "run.json").string() + "\" --out \"" + dir.string() + "\"", dir);
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("synthesis.lambda"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(dir / "design.json"));
}

TEST(Cli, UnknownKeyIsAConfigError) {
    const auto dir = scratch("unknown");
    write_text(dir / "run.json", R"({"version": 1, "synthesis": {"lamda": 0.5}})");
    const auto r = run_cli("synth --config \"" + (dir / "run.json").string() + "\"", dir);
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("lamda"), std::string::npos) << r.out;
}

TEST(Cli, UndetectableModelIsInfeasible) {
    const auto dir = scratch("undetectable");
    lipfd::LipschitzPlant p;
    p.A = lipfd::Matrix::Constant(1, 1, 1.0);
    p.B = lipfd::Matrix::Zero(1, 1);
    p.C = lipfd::Matrix::Zero(1, 1);
    p.D1 = lipfd::Matrix::Zero(1, 1);
    p.D2 = lipfd::Matrix::Zero(1, 1);
    p.Q1 = lipfd::Matrix::Zero(1, 1);
    p.Q2 = lipfd::Matrix::Zero(1, 1);
    p.phi = lipfd::NonlinearMap::zero(1, 1);
    lipfd::io::write_json_file((dir / "toy.json").string(), lipfd::io::to_json(p));
    lipfd::io::json cfg = {{"version", 1}, {"plant", {{"model_file", (dir / "toy.json").string()}}}};
    lipfd::io::write_json_file((dir / "run.json").string(), cfg);
    const auto r = run_cli("synth --config \"" + (dir / "run.json").string() + "\" --out \"" + dir.string() + "\"", dir);
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("infeasible"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(dir / "design.json"));
}

TEST(Cli, SynthWritesDesignAndManifest) {
    const auto dir = scratch("synth");
    const auto r = run_cli("synth --preset paper-literal --dump-lmi --out \"" + dir.string() + "\"", dir);
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("certificates: PASS"), std::string::npos) << r.out;
    ASSERT_TRUE(fs::exists(dir / "design.json"));
    ASSERT_TRUE(fs::exists(dir / "manifest.json"));
    ASSERT_TRUE(fs::exists(dir / "lmi.txt"));
    const auto design = lipfd::io::design_from_json(lipfd::io::read_json_file((dir / "design.json").string()));
    EXPECT_EQ(design.L.rows(), 4);
    EXPECT_EQ(design.L.cols(), 2);
    EXPECT_NEAR(design.gamma, 3.6470516, 1e-4);
    const auto manifest = lipfd::io::read_json_file((dir / "manifest.json").string());
    EXPECT_EQ(manifest.at("command"), "synth");
    EXPECT_FALSE(slurp(dir / "lmi.txt").empty());
}

TEST(Cli, PrintedFormReportsInfeasible) {
    const auto dir = scratch("printed");
    const auto r = run_cli("synth --preset paper-literal --form printed --out \"" + dir.string() + "\"", dir);
    EXPECT_EQ(r.code, 2) << r.out;
}

TEST(Cli, BadOptionValueIsAConfigError) {
    const auto dir = scratch("badopt");
    EXPECT_EQ(run_cli("bench --scenario 9", dir).code, 1);
    EXPECT_EQ(run_cli("synth --preset nonsense", dir).code, 1);
    EXPECT_EQ(run_cli("", dir).code, 1);
}

TEST(Cli, SingleScenarioBundleAndPlotData) {
    const auto dir = scratch("bench");
    const fs::path out = dir / "bundle";
    const auto r = run_cli("bench --scenario 2 --residual earr --duration 7 --out \"" + out.string() + "\"", dir);
    ASSERT_TRUE(r.code == 0 || r.code == 4) << r.out;
    EXPECT_TRUE(fs::exists(out / "summary.csv"));
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_TRUE(fs::exists(out / "thresholds.json"));
    EXPECT_TRUE(fs::exists(out / "scenario_2" / "residuals_earr.csv"));
    EXPECT_TRUE(fs::exists(out / "scenario_2" / "evaluation_earr.csv"));
    EXPECT_FALSE(fs::exists(out / "scenario_2" / "residuals_arr.csv"));
    EXPECT_FALSE(fs::exists(out / "scenario_1"));

    const auto p = run_cli("export-plotdata \"" + out.string() + "\" --downsample 100", dir);
    ASSERT_EQ(p.code, 0) << p.out;
    const std::string eva = slurp(out / "plotdata" / "scenario_2_evaluation.csv");
    EXPECT_EQ(eva.rfind("t,series,value\n", 0), 0u);
    EXPECT_NE(eva.find(",J_EARR_1,"), std::string::npos);
    EXPECT_NE(eva.find(",Jth_EARR_1,"), std::string::npos);
    EXPECT_NE(eva.find(",alarm_EARR,"), std::string::npos);
    const std::string res = slurp(out / "plotdata" / "scenario_2_residuals.csv");
    EXPECT_NE(res.find(",r_EARR_2,"), std::string::npos);

    // every 100th row of the wide file, one long row per series
    std::ifstream wide(out / "scenario_2" / "residuals_earr.csv");
    std::string line;
    long rows = -1;
    while (std::getline(wide, line)) ++rows;
    long long_rows = -1;
    std::istringstream ls(res);
    while (std::getline(ls, line)) ++long_rows;
    EXPECT_EQ(long_rows, 2 * ((rows + 99) / 100));
}

TEST(Cli, SeedMakesBundlesReproducible) {
    const auto dir = scratch("seed");
    const std::string common = "bench --scenario 4 --duration 2 ";
    ASSERT_NE(run_cli(common + "--seed 7 --out \"" + (dir / "a").string() + "\"", dir).code, 1);
    ASSERT_NE(run_cli(common + "--seed 7 --out \"" + (dir / "b").string() + "\"", dir).code, 1);
    ASSERT_NE(run_cli(common + "--seed 8 --out \"" + (dir / "c").string() + "\"", dir).code, 1);
    for (const char* f : {"summary.csv", "scenario_4/sim.csv", "scenario_4/evaluation_earr.csv", "thresholds.json"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    }
    EXPECT_NE(slurp(dir / "a" / "scenario_4/sim.csv"), slurp(dir / "c" / "scenario_4/sim.csv"));
}

TEST(Cli, PlotDataNeedsASummary) {
    const auto dir = scratch("emptybundle");
    fs::create_directories(dir / "empty");
    const auto r = run_cli("export-plotdata \"" + (dir / "empty").string() + "\"", dir);
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("summary.csv"), std::string::npos) << r.out;
    EXPECT_EQ(run_cli("export-plotdata \"" + (dir / "missing").string() + "\"", dir).code, 1);
}
