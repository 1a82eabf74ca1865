#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cmid/harness.hpp"

namespace fs = std::filesystem;
using cmid::json;

namespace {

struct Result {
    int code;
    std::string output;  ///< stdout and stderr
};

Result run(const std::string& args) {
    const std::string cmd = std::string(CMID_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, ""};
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("cmid_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::string config_arg() { return std::string("--config ") + CMID_CONFIG_DIR + "/experiment.json"; }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("identify --no-such-flag").code, 2);
}

TEST(Cli, IdentifyExampleRecoversOrder) {
    const auto dir = scratch("identify");
    const auto r = run("identify " + config_arg() + " --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const json j = json::parse(slurp(dir / "model.json"));
    ASSERT_TRUE(j["models"].contains("I"));
    ASSERT_TRUE(j["models"].contains("II"));
    for (const char* m : {"I", "II"}) {
        const auto mdl = cmid::model_from_json(j["models"][m]);
        EXPECT_EQ(mdl.n, 2) << m;
    }
    const auto one = run("identify " + config_arg() + " --override pipeline.method=II --out " + dir.string());
    ASSERT_EQ(one.code, 0) << one.output;
    EXPECT_EQ(json::parse(slurp(dir / "model.json"))["models"].size(), 1u);
    fs::remove_all(dir);
}

TEST(Cli, EvaluateAndValidateIdentifiedModel) {
    const auto dir = scratch("evaluate");
    ASSERT_EQ(run("identify " + config_arg() + " --out " + dir.string()).code, 0);
    const auto model = (dir / "model.json").string();
    const auto ev = run("evaluate " + config_arg() + " --model " + model + " --out " + dir.string());
    ASSERT_EQ(ev.code, 0) << ev.output;
    const json e = json::parse(slurp(dir / "evaluation.json"));
    for (const char* m : {"I", "II"})
        for (const auto& en : cmid::benchmark_entries()) EXPECT_LE(e[m]["errors"][en.name].get<double>(), 1e-8) << m << en.name;
    EXPECT_TRUE(fs::exists(dir / "bode" / "G213_true.csv"));
    EXPECT_TRUE(fs::exists(dir / "bode" / "G213_I.csv"));

    const auto va = run("validate " + config_arg() + " --override validation.duration=5 --model " + model + " --out " + dir.string());
    ASSERT_EQ(va.code, 0) << va.output;
    EXPECT_TRUE(fs::exists(dir / "validation" / "true.csv"));
    EXPECT_TRUE(fs::exists(dir / "validation" / "II.csv"));
    EXPECT_EQ(run("evaluate " + config_arg() + " --out " + dir.string()).code, 2);
    fs::remove_all(dir);
}

TEST(Cli, StagewiseCommandsChain) {
    const auto dir = scratch("chain");
    const std::string small = " --override excitation.initial_conditions.count=300";
    ASSERT_EQ(run("simulate " + config_arg() + small + " --out " + dir.string()).code, 0);
    ASSERT_TRUE(fs::exists(dir / "samples.json"));
    const auto ex = run("extract " + config_arg() + small + " --samples " + (dir / "samples.json").string() + " --out " + dir.string());
    ASSERT_EQ(ex.code, 0) << ex.output;
    const auto hd = cmid::harmonics_from_json(json::parse(slurp(dir / "harmonics.json")));
    EXPECT_EQ(hd.order, 4);
    EXPECT_EQ(hd.samples_used, 3000);
    const auto id = run("identify " + config_arg() + " --harmonics " + (dir / "harmonics.json").string() + " --out " + dir.string());
    EXPECT_TRUE(id.code == 0 || id.code == 3) << id.output;
    EXPECT_TRUE(fs::exists(dir / "model.json"));
    fs::remove_all(dir);
}

TEST(Cli, MissingFrequenciesIsAConfigError) {
    const auto r = run("identify " + config_arg() + " --override excitation.frequencies=null --out " + scratch("missing").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("excitation.frequencies"), std::string::npos) << r.output;
    const auto nofile = run("identify --config /nonexistent/cfg.json");
    EXPECT_EQ(nofile.code, 2) << nofile.output;
}

TEST(Cli, DemoWithoutNoiseMatchesNoiseFreeColumn) {
    const auto dir = scratch("demo0");
    const auto r = run("demo --override noise.variance=0 --override montecarlo.runs=1 --override validation.duration=5 --out " +
                       dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const json t = json::parse(slurp(dir / "error_table.json"))["table"];
    for (const auto& en : cmid::benchmark_entries()) {
        const double nf = t["noise_free"][en.name]["mean"].get<double>();
        EXPECT_LE(nf, 1e-8);
        EXPECT_EQ(t["noisy_I"][en.name]["mean"].get<double>(), nf) << en.name;
        EXPECT_LE(t["noisy_II"][en.name]["mean"].get<double>(), 1e-8) << en.name;
    }
    fs::remove_all(dir);
}

TEST(Cli, DemoIsReproducible) {
    const std::string ov =
        " --override montecarlo.runs=1 --override seed=7 --override excitation.initial_conditions.count=300"
        " --override validation.duration=5";
    const auto a = scratch("demo_a"), b = scratch("demo_b");
    const auto ra = run("demo" + ov + " --out " + a.string());
    const auto rb = run("demo" + ov + " --out " + b.string());
    ASSERT_EQ(ra.code, rb.code) << ra.output << rb.output;
    ASSERT_TRUE(fs::exists(a / "error_table.json")) << ra.output;
    EXPECT_EQ(slurp(a / "error_table.json"), slurp(b / "error_table.json"));
    EXPECT_EQ(slurp(a / "runs" / "run_0.json"), slurp(b / "runs" / "run_0.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}
