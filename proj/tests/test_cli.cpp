#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "cdpsr/io.hpp"
#include "support.hpp"

using namespace cdpsr;

namespace {

struct Run {
    int status;
    std::string out;
    std::string err;
};

Run cli(const std::string& args, const fs::path& scratch) {
    const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
    const std::string cmd = std::string("'") + CDPSR_CLI + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, test::read_file(out), test::read_file(err)};
}

void write_config(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

const char* kSmall =
    "seed=5\n"
    "target.size=16\n"
    "optics.theta=2\n"
    "masks.count=4\n"
    "noise.kind=gaussian\n"
    "noise.param=20\n"
    "solver.iters=3\n";

}  // namespace

TEST(Cli, HelpAndBadArguments) {
    test::TempDir dir("cli_help");
    auto r = cli("--help", dir);
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("reconstruct"), std::string::npos);
    r = cli("bench --frobnicate", dir);
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("error"), std::string::npos);
    r = cli("", dir);
    EXPECT_NE(r.status, 0);
    r = cli("reconstruct --in " + (dir / "missing").string() + " --algo conv", dir);
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, SimulateReconstructEvaluate) {
    test::TempDir dir("cli_pipe");
    write_config(dir / "cfg.txt", kSmall);
    const auto sim = dir / "sim";
    auto r = cli("--config " + (dir / "cfg.txt").string() + " --out " + sim.string() + " simulate", dir);
    ASSERT_EQ(r.status, 0) << r.err;
    for (const auto* f : {"experiment.txt", "optics.meta", "truth.f64", "masks", "stack"})
        EXPECT_TRUE(fs::exists(sim / f)) << f;

    r = cli("reconstruct --in " + sim.string() + " --algo do-tv", dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto rec = sim / "recon_do-tv";
    for (const auto* f : {"field.f64", "iterations.csv", "result.txt", "amplitude.png", "phase.png"})
        EXPECT_TRUE(fs::exists(rec / f)) << f;
    const auto csv = test::read_file(rec / "iterations.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

    r = cli("--out " + (dir / "eval").string() + " evaluate --field " + (rec / "field.f64").string() + " --truth " +
                (sim / "truth.f64").string(),
            dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("psnr_amplitude="), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "eval/metrics.txt"));
}

TEST(Cli, MultiCellSimulateIsRejected) {
    test::TempDir dir("cli_multi");
    write_config(dir / "cfg.txt", std::string(kSmall) + "optics.theta=1,2\n");
    const auto r = cli("--config " + (dir / "cfg.txt").string() + " --out " + (dir / "o").string() + " simulate", dir);
    EXPECT_EQ(r.status, 1);
}

TEST(Cli, SegmentCountsSeventyDisks) {
    test::TempDir dir("cli_seg");
    export_real_png(dir / "disks.png", test::seventy_disks());
    const auto r = cli("--out " + (dir / "seg").string() + " segment --input " + (dir / "disks.png").string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(r.out, "count=70\n");
    EXPECT_TRUE(fs::exists(dir / "seg/labels.png"));
}

TEST(Cli, BenchThreadCountDoesNotChangeResults) {
    test::TempDir dir("cli_bench");
    write_config(dir / "cfg.txt", std::string(kSmall) + "optics.theta=1,2\nnoise.param=10,20\nsolver.iters=2\n");
    for (const auto* t : {"1", "4"}) {
        const auto r = cli("--config " + (dir / "cfg.txt").string() + " --threads " + t + " --out " +
                               (dir / t).string() + " bench",
                           dir);
        ASSERT_EQ(r.status, 0) << r.err;
    }
    EXPECT_EQ(test::read_file(dir / "1/results.csv"), test::read_file(dir / "4/results.csv"));
    EXPECT_EQ(test::read_file(dir / "1/summary.csv"), test::read_file(dir / "4/summary.csv"));
}
