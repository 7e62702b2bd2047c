#include <gtest/gtest.h>

#include <sstream>

#include "cdpsr/experiment.hpp"
#include "support.hpp"

using namespace cdpsr;

namespace {

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

ExperimentConfig minimal(const fs::path& out) {
    ExperimentConfig c;
    c.out = out;
    c.target.size = 16;
    c.thetas = {1};
    c.mask_count = 2;
    c.noise_kind = NoiseKind::None;
    c.solver.outer_iters = 2;
    c.algos = {Algorithm::Conv};
    return c;
}

}  // namespace

TEST(ExperimentConfig, RoundTripsThroughKeyValue) {
    ExperimentConfig c;
    c.seed = 99;
    c.thetas = {2, 4};
    c.noise_params = {2.0, 10.0, 0.1};
    c.schedule = {1.0, 0.5};
    c.algos = {Algorithm::DoTv};
    c.segment = true;
    c.segment_params.min_distance = 4.5;
    c.solver.ordering = MaskOrdering::ParallelAverage;
    const auto text = c.to_key_value().to_string();
    const auto back = ExperimentConfig::from_key_value(KeyValue::parse(text));
    EXPECT_EQ(back.to_key_value().to_string(), text);
    EXPECT_EQ(back.thetas, c.thetas);
    EXPECT_EQ(back.noise_params, c.noise_params);

    test::TempDir dir("cfg");
    c.save(dir / "c.txt");
    EXPECT_EQ(ExperimentConfig::load(dir / "c.txt").to_key_value().to_string(), text);
}

TEST(ExperimentConfig, RejectsUnknownKeysAndMissingFiles) {
    EXPECT_THROW(ExperimentConfig::from_key_value(KeyValue::parse("solver.etaa=1\n")), ConfigError);
    ExperimentConfig c;
    c.target.amplitude = "/nonexistent/image.png";
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.target.size = 30;
    c.thetas = {4};
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.algos = {Algorithm::DoExt};
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(parse_algorithm("do-net"), ConfigError);
}

TEST(ExperimentConfig, SweepCellsAreThetaMajor) {
    ExperimentConfig c;
    c.thetas = {2, 3, 4};
    c.noise_params = {2, 10, 20};
    const auto cells = c.cells();
    ASSERT_EQ(cells.size(), 9u);
    EXPECT_EQ(cells[4].theta, 3u);
    EXPECT_EQ(cells[4].noise_param, 10.0);
    EXPECT_EQ(cells[8].index, 8u);
    c.noise_kind = NoiseKind::None;
    EXPECT_EQ(c.cells().size(), 3u);
}

TEST(Targets, BuiltinPairIsScaled) {
    TargetSpec spec;
    spec.size = 32;
    const auto t = make_target(spec, 0.7, 1);
    EXPECT_EQ(t.field.width(), 32u);
    double amin = 1e9, amax = -1e9, pmin = 1e9, pmax = -1e9;
    for (const auto& v : t.field.values()) {
        amin = std::min(amin, std::abs(v)), amax = std::max(amax, std::abs(v));
        pmin = std::min(pmin, std::arg(v)), pmax = std::max(pmax, std::arg(v));
    }
    EXPECT_NEAR(amin, 0.2, 1e-12);
    EXPECT_NEAR(amax, 1.0, 1e-12);
    EXPECT_NEAR(pmin, -std::numbers::pi / 2, 1e-12);
    EXPECT_NEAR(pmax, std::numbers::pi / 2, 1e-12);
}

TEST(Targets, SyntheticCellsCarryReferenceCount) {
    TargetSpec spec;
    spec.amplitude = spec.phase = "synthetic:cells";
    spec.size = 96;
    const auto t = make_target(spec, 0.7, 3);
    ASSERT_TRUE(t.reference_count.has_value());
    EXPECT_GT(*t.reference_count, 0u);
    const auto labels = watershed_segment(wrapped_phase(t.field));
    EXPECT_EQ(count_cells(labels, true), *t.reference_count);
}

TEST(RunExperiment, MinimalRunEmitsDeclaredFiles) {
    test::TempDir dir("exp_min");
    const auto cfg = minimal(dir / "out");
    const auto rep = run_experiment(cfg);
    ASSERT_EQ(rep.rows.size(), 1u);
    for (const auto* f : {"config.txt", "results.csv", "summary.csv", "cell_000/truth.f64", "cell_000/truth.meta",
                          "cell_000/truth_amplitude.png", "cell_000/truth_phase.png", "cell_000/conv/field.f64",
                          "cell_000/conv/iterations.csv", "cell_000/conv/metrics.txt",
                          "cell_000/conv/amplitude.png", "cell_000/conv/phase.png"})
        EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
    EXPECT_FALSE(fs::exists(dir / "out/FAILED"));
    const auto csv = lines(test::read_file(dir / "out/results.csv"));
    ASSERT_EQ(csv.size(), 2u);
    EXPECT_EQ(csv[0], results_csv_header());
    EXPECT_EQ(csv[1].substr(0, 17), "conv,1,none,NA,2,");
    EXPECT_EQ(csv[1].substr(csv[1].size() - 3), ",NA");
    // the saved configuration reproduces the run
    EXPECT_EQ(ExperimentConfig::load(dir / "out/config.txt").to_key_value().to_string(),
              cfg.to_key_value().to_string());
}

TEST(RunExperiment, RepeatedRunsAreByteIdentical) {
    test::TempDir dir("exp_det");
    auto cfg = minimal(dir / "a");
    cfg.thetas = {1, 2};
    cfg.noise_kind = NoiseKind::Poisson;
    cfg.noise_params = {1e3};
    cfg.algos = {Algorithm::Conv, Algorithm::DoTv};
    run_experiment(cfg);
    cfg.out = dir / "b";
    cfg.threads = 3;
    run_experiment(cfg);
    for (const auto* f : {"results.csv", "summary.csv", "cell_001/do-tv/iterations.csv"})
        EXPECT_EQ(test::read_file(dir / "a" / f), test::read_file(dir / "b" / f)) << f;
    EXPECT_EQ(test::read_file(dir / "a/cell_001/do-tv/field.f64"), test::read_file(dir / "b/cell_001/do-tv/field.f64"));
}

TEST(RunExperiment, NineCellSweepHasBothAlgorithmsPerRow) {
    test::TempDir dir("exp_sweep");
    auto cfg = minimal(dir / "out");
    cfg.target.size = 12;
    cfg.thetas = {2, 3, 4};
    cfg.noise_kind = NoiseKind::Gaussian;
    cfg.noise_params = {2, 10, 20};
    cfg.algos = {Algorithm::Conv, Algorithm::DoTv};
    cfg.previews = false;
    cfg.threads = 4;
    const auto rep = run_experiment(cfg);
    EXPECT_EQ(rep.rows.size(), 18u);
    const auto summary = lines(test::read_file(rep.summary_csv));
    ASSERT_EQ(summary.size(), 10u);
    EXPECT_NE(summary[0].find("conv_psnr_amp_db"), std::string::npos);
    EXPECT_NE(summary[0].find("do-tv_psnr_amp_db"), std::string::npos);
    for (std::size_t i = 1; i < summary.size(); ++i)
        EXPECT_EQ(std::count(summary[i].begin(), summary[i].end(), ','),
                  std::count(summary[0].begin(), summary[0].end(), ','));
    EXPECT_EQ(summary[1].substr(0, 15), "0,2,gaussian,2,");
    EXPECT_EQ(lines(test::read_file(rep.results_csv)).size(), 19u);
}

TEST(RunExperiment, SegmentationFillsCellCount) {
    test::TempDir dir("exp_seg");
    auto cfg = minimal(dir / "out");
    cfg.target.amplitude = cfg.target.phase = "synthetic:cells";
    cfg.target.size = 48;
    cfg.segment = true;
    const auto rep = run_experiment(cfg);
    ASSERT_TRUE(rep.rows[0].metrics.cell_count.has_value());
    EXPECT_TRUE(fs::exists(dir / "out/cell_000/conv/labels.png"));
}

TEST(RunExperiment, StageFailureWritesMarker) {
    test::TempDir dir("exp_fail");
    auto cfg = minimal(dir / "out");
    cfg.algos = {Algorithm::Conv, Algorithm::DoExt};
    cfg.ext_executable = dir / "fail.sh";
    std::ofstream(cfg.ext_executable) << "#!/bin/sh\nexit 7\n";
    fs::permissions(cfg.ext_executable, fs::perms::owner_all);
    cfg.ext_workdir = dir / "work";
    try {
        run_experiment(cfg);
        FAIL() << "expected failure";
    } catch (const ExperimentError& e) {
        EXPECT_EQ(e.stage(), "reconstruct:do-ext");
    }
    const auto marker = test::read_file(dir / "out/FAILED");
    EXPECT_NE(marker.find("[reconstruct:do-ext]"), std::string::npos);
    // earlier stages of the cell are kept
    EXPECT_TRUE(fs::exists(dir / "out/cell_000/conv/field.f64"));
}

TEST(RunExperiment, ExternalDenoiserEndToEnd) {
    test::TempDir dir("exp_ext");
    auto cfg = minimal(dir / "out");
    cfg.algos = {Algorithm::DoExt};
    cfg.ext_executable = CDPSR_BLUR_TOOL;
    cfg.ext_workdir = dir / "work";
    cfg.ext_amplitude = 0.5;
    cfg.ext_phase = 0.5;
    const auto rep = run_experiment(cfg);
    EXPECT_EQ(rep.rows.size(), 1u);
    EXPECT_TRUE(fs::exists(dir / "out/cell_000/do-ext/field.f64"));
}
