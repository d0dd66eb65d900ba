#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pcaharm/pipeline.hpp"
#include "pcaharm/table2_fixture.hpp"
#include "support/synthetic.hpp"

using namespace pcaharm;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig two_dataset_config(const fs::path& root, std::size_t images = 30) {
    synth::write_blob_dataset(root / "in" / "alpha", images, 24, 24, 1, 0.15f);
    synth::write_blob_dataset(root / "in" / "beta", images, 20, 28, 2, 0.35f);
    std::ostringstream text;
    text << "output_dir = out\n"
         << "resize = 24x24\n"
         << "trainer = " << PCAHARM_STUB_TRAINER << "\n"
         << "selection = variance:0.9\n"
         << "[dataset alpha]\n"
         << "dir = in/alpha\n"
         << "[dataset beta]\n"
         << "dir = in/beta\n";
    std::ofstream(root / "run.cfg") << text.str();
    return RunConfig::load(root / "run.cfg");
}

}  // namespace

TEST(RunConfig, Parse) {
    const RunConfig cfg = RunConfig::parse(
        "# comment\n"
        "seed = 7\n"
        "resize = none\n"
        "selection = kaiser:0.5\n"
        "fit_on = train\n"
        "external_subset = test\n"
        "decline_reference = column\n"
        "worst_k = 4\n"
        "epochs = 3\n"
        "mask_pattern = {id}-m.png\n"
        "[dataset one]\n"
        "dir = d1\n"
        "[dataset two]\n"
        "dir = /abs/d2\n"
        "mask_dir = masks\n"
        "require_tumor = yes\n",
        "/base");
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_FALSE(cfg.resize.has_value());
    EXPECT_DOUBLE_EQ(cfg.selection.eigen_threshold, 0.5);
    EXPECT_TRUE(cfg.fit_on_train);
    EXPECT_EQ(cfg.external_subset, "test");
    EXPECT_EQ(cfg.decline_reference, DeclineReference::column);
    EXPECT_EQ(cfg.worst_k, 4u);
    EXPECT_EQ(cfg.trainer_settings.epochs, 3);
    ASSERT_EQ(cfg.datasets.size(), 2u);
    EXPECT_EQ(cfg.datasets[0].dir, fs::path("/base/d1"));
    EXPECT_EQ(cfg.datasets[0].layout.mask_pattern, "{id}-m.png");
    EXPECT_EQ(cfg.datasets[1].dir, fs::path("/abs/d2"));
    EXPECT_EQ(cfg.datasets[1].layout.mask_dir, fs::path("/base/masks"));
    EXPECT_TRUE(cfg.datasets[1].layout.require_tumor);
}

TEST(RunConfig, Errors) {
    EXPECT_THROW(RunConfig::parse("nonsense = 1\n"), Error);
    EXPECT_THROW(RunConfig::parse("seed = abc\n"), Error);
    EXPECT_THROW(RunConfig::parse("[dataset x]\n"), Error);
    EXPECT_THROW(RunConfig::parse("[other x]\ndir=a\n"), Error);
    EXPECT_THROW(RunConfig::parse_size("12"), Error);
    EXPECT_THROW(RunConfig::parse_size("0x4"), Error);
    EXPECT_EQ(RunConfig::parse_size("16x8"), (std::pair<std::size_t, std::size_t>{16, 8}));
    EXPECT_THROW(parse_stage("deploy"), Error);
}

TEST(Pipeline, EndToEndWithStubTrainer) {
    synth::TempDir dir("e2e");
    const RunConfig cfg = two_dataset_config(dir.path());
    synth::LogCapture logs;
    ASSERT_EQ(run_pipeline(cfg), 0);

    const RunLayout layout{cfg.output_dir};
    for (Stage s : kStages) EXPECT_TRUE(fs::exists(layout.marker(s))) << to_string(s);
    for (const char* ds : {"alpha", "beta"}) {
        EXPECT_TRUE(fs::exists(layout.model(ds)));
        EXPECT_TRUE(fs::exists(layout.selection(ds)));
        EXPECT_TRUE(fs::exists(layout.reports() / ("scree_" + std::string(ds) + ".csv")));
        EXPECT_EQ(read_split(layout.split_file(ds)).total(), 30u);
        const DataMatrix m = read_umx(layout.matrix(ds));
        EXPECT_EQ(m.rows, 30u);
        EXPECT_EQ(m.cols, 24u * 24u);
    }
    EXPECT_EQ(std::distance(fs::directory_iterator(layout.manifests()), fs::directory_iterator{}), 8);

    const ExperimentTable table = read_results_csv(layout.results());
    EXPECT_TRUE(table.complete(Arm::original));
    EXPECT_TRUE(table.complete(Arm::pca));
    for (const auto& [key, r] : table.cells()) {
        EXPECT_EQ(r.recall, 1.0) << describe(key);
        EXPECT_EQ(r.dice, 1.0);
        EXPECT_EQ(r.images, key.external() ? 30u : read_split(layout.split_file(key.eval_dataset)).test_ids.size());
    }
    for (const char* f : {"table2.csv", "table2.md", "table3.csv", "declines.csv"}) {
        EXPECT_TRUE(fs::exists(layout.reports() / f)) << f;
    }
    EXPECT_NE(slurp(layout.reports() / "table2.csv").find("Mean,1.000000,1.000000,0.000000"), std::string::npos);
    EXPECT_NE(slurp(layout.reports() / "table3.csv").find("degenerate"), std::string::npos);
}

TEST(Pipeline, ResumeIsIdempotent) {
    synth::TempDir dir("resume");
    const RunConfig cfg = two_dataset_config(dir.path(), 12);
    synth::LogCapture logs;
    run_pipeline(cfg);
    const RunLayout layout{cfg.output_dir};
    const std::string t2 = slurp(layout.reports() / "table2.csv");
    const std::string t3 = slurp(layout.reports() / "table3.csv");
    const auto stamp = fs::last_write_time(layout.results());

    run_pipeline(cfg);
    EXPECT_EQ(fs::last_write_time(layout.results()), stamp);

    // Interrupt after training: the evaluate marker is gone and the run picks up from there.
    fs::remove(layout.marker(Stage::evaluate));
    fs::remove(layout.marker(Stage::report));
    fs::remove_all(layout.reports() / "table2.csv");
    run_pipeline(cfg);
    EXPECT_EQ(slurp(layout.reports() / "table2.csv"), t2);
    EXPECT_EQ(slurp(layout.reports() / "table3.csv"), t3);

    RunOptions only_report;
    only_report.stage = Stage::report;
    run_pipeline(cfg, only_report);
    EXPECT_EQ(slurp(layout.reports() / "table2.csv"), t2);
}

TEST(Pipeline, StageNeedsEarlierStages) {
    synth::TempDir dir("stage");
    const RunConfig cfg = two_dataset_config(dir.path(), 6);
    synth::LogCapture logs;
    RunOptions opts;
    opts.stage = Stage::pca;
    EXPECT_THROW(run_pipeline(cfg, opts), ExperimentError);
    opts.stage = Stage::ingest;
    run_pipeline(cfg, opts);
    opts.stage = Stage::pca;
    EXPECT_NO_THROW(run_pipeline(cfg, opts));
    EXPECT_FALSE(fs::exists(RunLayout{cfg.output_dir}.marker(Stage::train)));
}

TEST(Pipeline, FailingTrainerStopsTheRun) {
    synth::TempDir dir("fail");
    RunConfig cfg = two_dataset_config(dir.path(), 6);
    cfg.trainer = "false";
    synth::LogCapture logs;
    EXPECT_THROW(run_pipeline(cfg), ExperimentError);
    const RunLayout layout{cfg.output_dir};
    EXPECT_TRUE(fs::exists(layout.marker(Stage::pca)));
    EXPECT_FALSE(fs::exists(layout.marker(Stage::train)));
}

TEST(Pipeline, ResultsFromFixture) {
    synth::TempDir dir("fixture");
    write_results_csv(dir.path() / "results.csv", fixture::table2());
    RunConfig cfg;
    cfg.output_dir = dir.path() / "out";
    RunOptions opts;
    opts.results_from = dir.path();
    synth::LogCapture logs;
    run_pipeline(cfg, opts);
    const std::string md = slurp(cfg.output_dir / "reports" / "table2.md");
    EXPECT_NE(md.find("**0.18**"), std::string::npos);
    const std::string t3 = slurp(cfg.output_dir / "reports" / "table3.csv");
    EXPECT_NE(t3.find("Worst 10,recall,10"), std::string::npos);
    EXPECT_NE(t3.find("Other 20,recall,20"), std::string::npos);
}

TEST(Cli, FixtureAndReport) {
    synth::TempDir dir("cli");
    const std::string cli = PCAHARM_CLI;
    const std::string out = dir.path().string();
    ASSERT_EQ(std::system((cli + " fixture --out '" + out + "/fx' > /dev/null").c_str()), 0);
    ASSERT_EQ(std::system((cli + " run --results-from '" + out + "/fx' --out '" + out + "/rep' 2> /dev/null").c_str()), 0);
    EXPECT_TRUE(fs::exists(dir.path() / "rep" / "reports" / "table3.csv"));
    EXPECT_NE(std::system((cli + " run 2> /dev/null").c_str()), 0);
}

TEST(Cli, IngestFitReconstruct) {
    synth::TempDir dir("cli");
    synth::write_blob_dataset(dir.path() / "ds", 8, 16, 16, 3);
    const std::string cli = PCAHARM_CLI;
    const std::string d = dir.path().string();
    ASSERT_EQ(std::system((cli + " ingest --dir '" + d + "/ds' --out '" + d + "/m' > /dev/null 2>&1").c_str()), 0);
    ASSERT_EQ(std::system((cli + " pca fit --in '" + d + "/m.umx' --out '" + d + "/m.upm' > /dev/null").c_str()), 0);
    ASSERT_EQ(std::system((cli + " pca reconstruct --model '" + d + "/m.upm' --k manual --out '" + d +
                           "/r.umx' > /dev/null 2>&1")
                              .c_str()),
              0);
    ASSERT_EQ(std::system((cli + " pca scree --model '" + d + "/m.upm' --out '" + d + "/s.csv'").c_str()), 0);
    const DataMatrix in = read_umx(dir.path() / "m.umx");
    const DataMatrix rec = read_umx(dir.path() / "r.umx");
    ASSERT_EQ(in.data.size(), rec.data.size());
    for (std::size_t i = 0; i < in.data.size(); ++i) EXPECT_NEAR(in.data[i], rec.data[i], 1e-9);
    EXPECT_TRUE(fs::exists(dir.path() / "m.split.csv"));
    EXPECT_TRUE(fs::exists(dir.path() / "m_masks.umx"));
}
