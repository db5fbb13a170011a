#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "cglo/cli.hpp"
#include "test_util.hpp"

using namespace cglo;
using cglo::testing::temp_dir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cglo");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path small_config(const fs::path& dir) {
    const auto p = dir / "small.cfg";
    io::write_text(p,
                   "seed = 5\n"
                   "generator.latent_dim = 4\n"
                   "generator.output_size = 8\n"
                   "generator.base_feat = 8\n"
                   "train.epochs = 2\n"
                   "invert.steps = 5\n"
                   "augment.min_side = 8\n"
                   "augment.max_side = 12\n"
                   "fixture.n_patches = 6\n"
                   "fixture.n_scenes = 4\n"
                   "fixture.scene_size = 48\n");
    return p;
}

}  // namespace

TEST(Cli, GradcheckPasses) {
    const auto dir = temp_dir("cli_grad");
    const auto r = run_cli({"gradcheck", "--config", small_config(dir).string(), "--out", (dir / "run").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("PASS"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(dir / "run" / "gradcheck.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "config.resolved"));
}

TEST(Cli, UsageErrorsExitTwo) {
    const auto dir = temp_dir("cli_usage");
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"train", "--config", small_config(dir).string(), "--bogus"}).code, 2);
    EXPECT_EQ(run_cli({"train"}).code, 2);
    const auto r = run_cli({"train", "--config", small_config(dir).string(), "notanassignment"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error kind=usage"), std::string::npos);
}

TEST(Cli, InvalidInputExitsOneWithKind) {
    const auto dir = temp_dir("cli_bad");
    const auto cfg = small_config(dir).string();
    auto r = run_cli({"gradcheck", "--config", cfg, "--out", (dir / "a").string(), "train.epoch=3"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error kind=config message=", 0), 0u) << r.err;
    r = run_cli({"train", "--config", cfg, "--out", (dir / "b").string(), "paths.manifest=" + (dir / "none.json").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error kind=io", 0), 0u) << r.err;
    r = run_cli({"train", "--config", (dir / "missing.cfg").string()});
    EXPECT_EQ(r.code, 1);
}

TEST(Cli, EndToEndFixtureTrainInvertSynthAugment) {
    const auto dir = temp_dir("cli_e2e");
    const auto cfg = small_config(dir).string();
    const auto data = dir / "data", run = dir / "run";
    ASSERT_EQ(run_cli({"make-fixture", "--config", cfg, "--out", data.string()}).code, 0);
    ASSERT_TRUE(fs::exists(data / "manifest.json"));

    auto r = run_cli({"train", "--config", cfg, "--out", run.string(), "paths.manifest=" + (data / "manifest.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(run / "ckpt-2"));
    EXPECT_EQ(io::read_text(run / "loss.csv").substr(0, 15), "epoch,mean_loss");
    const auto ckpt = "paths.checkpoint=" + (run / "ckpt-2").string();

    r = run_cli({"invert", "--config", cfg, "--out", (dir / "inv").string(), ckpt,
                 "invert.image=" + (data / "patches" / "p00000.png").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "inv" / "reconstruction.png"));

    r = run_cli({"synth", "--config", cfg, "--out", (dir / "syn").string(), ckpt,
                 "synth.latent=" + (dir / "inv" / "latent.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "syn" / "synth.png"));
    r = run_cli({"synth", "--config", cfg, "--out", (dir / "syn2").string(), ckpt, "synth.sample=1"});
    ASSERT_EQ(r.code, 0) << r.err;

    const auto ann = "paths.annotations=" + (data / "annotations.json").string();
    r = run_cli({"augment", "--config", cfg, "--out", (dir / "aug1").string(), ckpt, ann});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run_cli({"augment", "--config", cfg, "--out", (dir / "aug2").string(), ckpt, ann});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto a1 = io::load_annotations(dir / "aug1" / "annotations.json");
    EXPECT_EQ(a1, io::load_annotations(dir / "aug2" / "annotations.json"));
    ASSERT_EQ(a1.size(), 4u);
    for (const auto& s : a1) EXPECT_EQ(s.boxes.size(), 4u) << s.id;
    EXPECT_EQ(io::read_text(dir / "aug1" / "scenes" / "scene_3.png"), io::read_text(dir / "aug2" / "scenes" / "scene_3.png"));
}

TEST(Cli, ZeroEpochTrainWritesInitialCheckpoint) {
    const auto dir = temp_dir("cli_zero");
    const auto cfg = small_config(dir).string();
    ASSERT_EQ(run_cli({"make-fixture", "--config", cfg, "--out", (dir / "data").string()}).code, 0);
    const auto r = run_cli({"train", "--config", cfg, "--out", (dir / "run").string(), "train.epochs=0",
                            "paths.manifest=" + (dir / "data" / "manifest.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ck = io::load_checkpoint(dir / "run" / "ckpt-0");
    EXPECT_TRUE(ck.history.mean_loss.empty());
    EXPECT_EQ(ck.table.size(), 6u);
}

TEST(Cli, SeedFlagOverridesConfig) {
    const auto dir = temp_dir("cli_seed");
    ASSERT_EQ(run_cli({"gradcheck", "--config", small_config(dir).string(), "--seed", "42", "--out", (dir / "r").string()}).code, 0);
    EXPECT_NE(io::read_text(dir / "r" / "config.resolved").find("seed = 42"), std::string::npos);
}
