#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mpt/checkpoint.hpp"
#include "mpt/worldgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string cli = MPT_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct temp_dir {
    fs::path path;
    explicit temp_dir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~temp_dir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

} // namespace

TEST(Cli, EnvgenIsDeterministicPerSeed) {
    temp_dir a("mpt_cli_envgen_a"), b("mpt_cli_envgen_b");
    ASSERT_EQ(0, run("--seed 7 envgen --kind maze --size 240x240 --count 2 --out " + a.str()));
    ASSERT_EQ(0, run("--seed 7 envgen --kind maze --size 240x240 --count 2 --out " + b.str()));
    EXPECT_EQ(read_file(a.str() + "/map_00000.pgm"), read_file(b.str() + "/map_00000.pgm"));
    EXPECT_EQ(read_file(a.str() + "/map_00001.pgm"), read_file(b.str() + "/map_00001.pgm"));
    EXPECT_FALSE(read_file(a.str() + "/map_00000.pgm").empty());
    EXPECT_TRUE(fs::exists(a.str() + "/run_config.json"));
    EXPECT_TRUE(fs::exists(a.str() + "/map_00000.json"));
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(2, run("envgen --wat 1 --out /tmp/x"));
    EXPECT_EQ(2, run("plan"));          // missing required flags
    EXPECT_EQ(2, run(""));              // missing subcommand
    EXPECT_EQ(0, run("--help"));
}

TEST(Cli, MissingFilesExitThree) {
    EXPECT_EQ(3, run("plan --map /tmp/does_not_exist.pgm --start 1,1 --goal 2,2 --out /tmp"));
    EXPECT_EQ(3, run("render --map /tmp/does_not_exist.pgm --out /tmp/x.ppm"));
}

TEST(Cli, PlanSucceedsOnOpenMapAndRenders) {
    temp_dir dir("mpt_cli_plan");
    mpt::costmap map(200, 200);
    mpt::save_pgm(map, dir.str() + "/map.pgm");
    ASSERT_EQ(0, run("--seed 3 plan --planner rrtstar --map " + dir.str() +
                     "/map.pgm --start 1,1 --goal 9,9 --time-limit 10 --out " + dir.str()));
    json result = json::parse(read_file(dir.str() + "/result.json"));
    EXPECT_TRUE(result.at("success").get<bool>());
    EXPECT_GT(result.at("cost").get<double>(), 11.0); // >= straight-line distance
    EXPECT_GT(result.at("vertices").get<int64_t>(), 0);
    EXPECT_TRUE(result.contains("states"));
    EXPECT_TRUE(fs::exists(dir.str() + "/plan.ppm"));
    EXPECT_TRUE(fs::exists(dir.str() + "/run_config.json"));

    ASSERT_EQ(0, run("render --map " + dir.str() + "/map.pgm --path " + dir.str() +
                     "/result.json --out " + dir.str() + "/r.ppm"));
    EXPECT_TRUE(fs::exists(dir.str() + "/r.ppm"));
}

TEST(Cli, PlanOnBlockedMapExitsOneWithRecord) {
    temp_dir dir("mpt_cli_blocked");
    mpt::costmap map(100, 100);
    for (int r = 0; r < 100; ++r) map.at(r, 50) = 1;
    mpt::save_pgm(map, dir.str() + "/map.pgm");
    ASSERT_EQ(1, run("plan --planner rrtstar --map " + dir.str() +
                     "/map.pgm --start 1,1 --goal 4,4 --time-limit 0.3 --out " + dir.str()));
    json result = json::parse(read_file(dir.str() + "/result.json"));
    EXPECT_FALSE(result.at("success").get<bool>());
    EXPECT_TRUE(result.contains("failure_reason"));
}

TEST(Cli, GradcheckPasses) {
    EXPECT_EQ(0, run("gradcheck --trials 1 --seed 5"));
}

TEST(Cli, CollectTrainInferPipeline) {
    temp_dir dir("mpt_cli_pipeline");
    ASSERT_EQ(0, run("--seed 11 envgen --kind maze --size 240x240 --count 2 --out " + dir.str() +
                     "/maps"));
    ASSERT_EQ(0, run("--seed 11 --threads 2 collect --envs " + dir.str() + "/maps --paths 1 --out " +
                     dir.str() + "/data"));
    EXPECT_TRUE(fs::exists(dir.str() + "/data/dataset.json"));

    // tiny checkpoint written through the library, consumed by the CLI
    mpt::mpt_model model(mpt::model_config::tiny(), 5);
    mpt::save_checkpoint(dir.str() + "/model.mptc", model);
    mpt::costmap map(160, 160);
    mpt::save_pgm(map, dir.str() + "/map.pgm");
    ASSERT_EQ(0, run("infer --model " + dir.str() + "/model.mptc --map " + dir.str() +
                     "/map.pgm --start 1,1 --goal 6,6 --tau 0.5 --out " + dir.str() + "/inf"));
    EXPECT_TRUE(fs::exists(dir.str() + "/inf/mask.pgm"));
    EXPECT_TRUE(fs::exists(dir.str() + "/inf/probs.pgm"));
    EXPECT_TRUE(fs::exists(dir.str() + "/inf/infer.json"));

    // plan with the inferred mask file
    ASSERT_EQ(0, run("--seed 2 plan --planner rrtstar --map " + dir.str() + "/map.pgm --mask " +
                     dir.str() + "/inf/mask.pgm --start 1,1 --goal 6,6 --time-limit 10 --out " +
                     dir.str() + "/plan"));
}

TEST(Cli, BenchOverCollectedData) {
    temp_dir dir("mpt_cli_bench");
    ASSERT_EQ(0, run("--seed 21 envgen --kind maze --size 240x240 --count 3 --out " + dir.str() +
                     "/maps"));
    ASSERT_EQ(0, run("--seed 21 --threads 2 collect --envs " + dir.str() + "/maps --paths 2 --out " +
                     dir.str() + "/data"));
    const int code = run("--seed 22 --threads 2 bench --data " + dir.str() +
                         "/data --planners rrtstar,oracle-rrtstar --multiplier 1.5 --time-limit 10 "
                         "--out " + dir.str() + "/bench");
    EXPECT_TRUE(code == 0 || code == 1); // 1 = some planner run missed its threshold
    EXPECT_TRUE(fs::exists(dir.str() + "/bench/results.csv"));
    EXPECT_TRUE(fs::exists(dir.str() + "/bench/summary.json"));
    json summary = json::parse(read_file(dir.str() + "/bench/summary.json"));
    EXPECT_TRUE(summary.contains("rrtstar"));
    EXPECT_TRUE(summary.contains("oracle-rrtstar"));
}

TEST(Cli, BenchDryRunRegistersPaperPreset) {
    temp_dir dir("mpt_cli_dry");
    ASSERT_EQ(0, run("bench --preset paper-forest-480 --planners rrtstar --dry-run --out " + dir.str()));
    json manifest = json::parse(read_file(dir.str() + "/dataset/dataset.json"));
    EXPECT_EQ(manifest.at("planned_records").get<int>(), 43750);
}
