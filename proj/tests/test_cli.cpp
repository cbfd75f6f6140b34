#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "ddrmpc/ddrmpc.hpp"

using namespace ddrmpc;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args)
{
    const std::string cmd = std::string(DDRMPC_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("ddrmpc_cli_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST(Cli, RunIsByteReproducible)
{
    const fs::path a = fresh("a"), b = fresh("b");
    const std::string args = "run --v-bar 1e-5 -T 80 --seed-noise 5 -o ";
    ASSERT_EQ(cli(args + a.string()), 0);
    ASSERT_EQ(cli(args + b.string()), 0);
    EXPECT_EQ(io::read_file(a / "run.csv"), io::read_file(b / "run.csv"));
    EXPECT_EQ(io::read_file(a / "schedule.txt"), io::read_file(b / "schedule.txt"));
}

TEST(Cli, ConfigFileAndFlagOverride)
{
    const fs::path dir = fresh("cfg");
    const fs::path cfg = dir / "c.json";
    io::write_file(cfg, R"({"v_bar": 1e-5, "T_sim": 50, "controller": "model-based"})");
    ASSERT_EQ(cli("run -c " + cfg.string() + " -T 40 -o " + (dir / "out").string()), 0);
    const io::json s = io::load_json(dir / "out" / "summary.json");
    EXPECT_EQ(s["steps"], 40);
    EXPECT_EQ(s["controller"], "model-based");
}

TEST(Cli, ValidationFailureExitsNonzero)
{
    EXPECT_NE(cli("run -L 3"), 0);
    EXPECT_NE(cli("run --ratio 1.1"), 0);
    EXPECT_NE(cli("run --controller pid"), 0);
    EXPECT_NE(cli("sweep --axis alpha --values 1"), 0);
}

TEST(Cli, DivergenceExitsNonzero)
{
    EXPECT_NE(cli("run --controller open-loop -T 300 --blowup 100"), 0);
}

TEST(Cli, AttackCheck)
{
    const fs::path dir = fresh("attack");
    ASSERT_EQ(cli("attack-check --attack worst-case -T 300 -o " + dir.string()), 0);
    EXPECT_EQ(cli("attack-check " + (dir / "schedule.txt").string()), 0);
    io::write_file(dir / "bad.txt", std::string(40, '1') + "\n");
    EXPECT_EQ(cli("attack-check --ratio 0.8841 " + (dir / "bad.txt").string()), 1);
}

TEST(Cli, CollectWritesRecord)
{
    const fs::path dir = fresh("collect");
    ASSERT_EQ(cli("collect --v-bar 0 -o " + dir.string()), 0);
    const std::string csv = io::read_file(dir / "offline.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 101);
    const io::json side = io::load_json(dir / "offline.json");
    EXPECT_TRUE(side["pe"]["exciting"].get<bool>());
    EXPECT_EQ(side["pe"]["rank"], 32);
}

TEST(Cli, SweepAndCompare)
{
    const fs::path dir = fresh("sweep");
    ASSERT_EQ(cli("sweep --axis v_bar --values 1e-6,1e-5 --reps 2 -T 40 -o " + dir.string()), 0);
    const std::string csv = io::read_file(dir / "sweep.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    ASSERT_EQ(cli("compare --v-bar 1e-5 -T 60 -o " + (dir / "cmp").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "cmp" / "compare.json"));
}

TEST(Cli, ShippedConfigsParse)
{
    for (const auto& e : fs::directory_iterator(DDRMPC_CONFIGS)) {
        if (e.path().extension() != ".json" || e.path().filename() == "batch_reactor_model.json") continue;
        EXPECT_NO_THROW(config_from_json(io::load_json(e.path()))) << e.path();
    }
    EXPECT_NO_THROW(io::model_from_json(io::load_json(fs::path(DDRMPC_CONFIGS) / "batch_reactor_model.json")));
}
