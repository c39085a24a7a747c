#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "partlift/io.hpp"
#include "support.hpp"

namespace partlift {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("partlift_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, SynthIsByteIdenticalUnderSeed) {
  ASSERT_EQ(run({"--seed", "7", "--out", path("a"), "synth", "--images", "2"}).code, 0);
  ASSERT_EQ(run({"--seed", "7", "--out", path("b"), "synth", "--images", "2"}).code, 0);
  for (const char* f : {"scenes.jsonl", "gt.jsonl", "records.jsonl", "camera.json"})
    EXPECT_EQ(read_text_file(path("a/") + f), read_text_file(path("b/") + f)) << f;
  ASSERT_EQ(run({"--seed", "8", "--out", path("c"), "synth", "--images", "2"}).code, 0);
  EXPECT_NE(read_text_file(path("a/gt.jsonl")), read_text_file(path("c/gt.jsonl")));
  const auto header = read_ground_truth(read_text_file(path("a/gt.jsonl"))).header;
  ASSERT_TRUE(header.has_value());
  EXPECT_EQ(header->seed, 7u);
}

TEST_F(CliTest, IdealPipelineScoresOne) {
  ASSERT_EQ(run({"--seed", "3", "--out", path("s"), "synth", "--images", "3"}).code, 0);
  ASSERT_EQ(run({"--camera", path("s/camera.json"), "--out", path("i"), "infer", "--records", path("s/records.jsonl")}).code, 0);
  const Result r = run({"--out", path("e"), "eval", "--dets", path("i/detections.jsonl"), "--gt", path("s/gt.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("AP"), std::string::npos);
  const json m = json::parse(read_text_file(path("e/metrics.json")));
  for (const char* key : {"config", "ap", "aos", "alp", "part_loc", "vis_acc", "template_acc", "n_images", "n_gt", "n_det"})
    EXPECT_TRUE(m.contains(key)) << key;
  EXPECT_EQ(m.size(), 10u);
  EXPECT_DOUBLE_EQ(m["ap"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["aos"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["alp"]["1.0"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["alp"]["2.0"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["part_loc"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["vis_acc"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["template_acc"].get<double>(), 1.0);
  EXPECT_EQ(m["n_images"].get<int>(), 3);
  EXPECT_EQ(m["config"]["eval"]["iou"].get<double>(), 0.7);
}

TEST_F(CliTest, AnnotateScenesMatchesSynthGroundTruth) {
  ASSERT_EQ(run({"--seed", "4", "--out", path("s"), "synth"}).code, 0);
  ASSERT_EQ(run({"--camera", path("s/camera.json"), "--out", path("a"), "annotate", "--scenes", path("s/scenes.jsonl")}).code, 0);
  const auto a = read_ground_truth(read_text_file(path("s/gt.jsonl")));
  const auto b = read_ground_truth(read_text_file(path("a/gt.jsonl")));
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) EXPECT_EQ(a.items[i].gt.parts2d, b.items[i].gt.parts2d);
}

TEST_F(CliTest, AnnotateKitti) {
  const Result r = run({"--calib", testing::data_path("kitti/000000_calib.txt"), "--out", path("k"), "annotate",
                        "--kitti-label", testing::data_path("kitti/000000_label.txt"), "--box-from-dataset"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_ground_truth(read_text_file(path("k/gt.jsonl"))).items.size(), 6u);
}

TEST_F(CliTest, CheckGradPasses) {
  const Result r = run({"--seed", "1", "--out", path("g"), "check-grad"});
  EXPECT_EQ(r.code, 0) << r.err;
  const json g = json::parse(read_text_file(path("g/grad_check.json")));
  EXPECT_FALSE(g.empty());
}

TEST_F(CliTest, BenchPoseReportsStatistics) {
  const Result r = run({"bench-pose", "--trials", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json b = json::parse(r.out);
  EXPECT_EQ(b["trials"].get<int>(), 20);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"--no-such-flag", "synth"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--interp", "7", "synth"}).code, 1);
  EXPECT_EQ(run({"infer", "--records", path("missing.jsonl")}).code, 1);
  write_text_file(path("bad.json"), R"({"eval": {"iou": 0.5, "bogus": 1}})");
  EXPECT_EQ(run({"--config", path("bad.json"), "--out", path("x"), "synth"}).code, 1);
  write_text_file(path("broken.json"), "{");
  EXPECT_EQ(run({"--config", path("broken.json"), "synth"}).code, 1);
  // A regular file where a directory is needed.
  write_text_file(path("file"), "x");
  EXPECT_EQ(run({"--out", path("file/sub"), "synth"}).code, 2);
  EXPECT_EQ(run({"--calib", path("missing"), "annotate", "--kitti-label", path("also-missing")}).code, 1);
  write_text_file(path("nop2.txt"), "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n");
  EXPECT_EQ(run({"--calib", path("nop2.txt"), "--out", path("y"), "annotate", "--kitti-label",
                 testing::data_path("kitti/000000_label.txt")}).code,
            1);
}

TEST(CliConfig, FlagsOverrideConfig) {
  cli::RunConfig cfg;
  cli::apply_config(cfg, json::parse(R"({"eval": {"iou": 0.5, "interp": 41}, "pnp": {"mode": "6dof"}, "seed": 9})"));
  EXPECT_EQ(cfg.eval.iou_threshold, 0.5);
  EXPECT_EQ(cfg.eval.interpolation, Interpolation::forty_one_point);
  EXPECT_EQ(cfg.pnp.mode, PnPMode::full_6dof);
  EXPECT_EQ(cfg.seed, 9u);
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "partlift_cli_override";
  std::filesystem::remove_all(dir);
  write_text_file(dir / "cfg.json", R"({"eval": {"iou": 0.5}})");
  ASSERT_EQ(run({"--config", (dir / "cfg.json").string(), "--seed", "2", "--out", (dir / "s").string(), "synth"}).code, 0);
  ASSERT_EQ(run({"--camera", (dir / "s/camera.json").string(), "--out", (dir / "i").string(), "infer", "--records",
                 (dir / "s/records.jsonl").string()}).code,
            0);
  ASSERT_EQ(run({"--config", (dir / "cfg.json").string(), "--iou", "0.6", "--out", (dir / "e").string(), "eval",
                 "--dets", (dir / "i/detections.jsonl").string(), "--gt", (dir / "s/gt.jsonl").string()}).code,
            0);
  const json m = json::parse(read_text_file(dir / "e/metrics.json"));
  EXPECT_EQ(m["config"]["eval"]["iou"].get<double>(), 0.6);
  std::filesystem::remove_all(dir);
}

TEST(CliConfig, ConfigEchoRoundTrips) {
  cli::RunConfig a;
  a.seed = 5;
  a.eval.difficulty = Difficulty::moderate;
  a.noise.part_sigma = 1.25;
  cli::RunConfig b;
  cli::apply_config(b, cli::config_json(a));
  EXPECT_EQ(cli::config_json(a), cli::config_json(b));
}

TEST(CliConfig, DefaultsHonorPublishedConstants) {
  const cli::RunConfig cfg;
  const ShapeBank bank = load_bank(cfg.bank);
  EXPECT_EQ(bank.n_parts, 36);
  EXPECT_EQ(cfg.eval.iou_threshold, 0.7);
  EXPECT_EQ(kPositiveIou, 0.7);
  EXPECT_EQ(cfg.nms, 0.5);
  EXPECT_EQ(kProposalCount, 200);
  EXPECT_EQ(cfg.loss_weights.parts, 3.0);
  EXPECT_EQ(cfg.loss_weights.cls, 1.0);
  EXPECT_EQ(cfg.loss_weights.reg, 1.0);
  EXPECT_EQ(cfg.loss_weights.vis, 1.0);
  EXPECT_EQ(cfg.loss_weights.temp, 1.0);
  EXPECT_EQ(cfg.eval.part_dist_threshold, 20.0);
  EXPECT_EQ(cfg.eval.part_norm_height, 155.0);
  EXPECT_EQ(cfg.eval.template_rel_tol, 0.2);
  EXPECT_EQ(cfg.anchors.anchors_per_location(), 70u);
  EXPECT_EQ(cfg.eval.alp_distances, (std::vector<double>{1.0, 2.0}));
}

TEST(CliSeeds, PerImageSeedsDiffer) {
  EXPECT_NE(cli::image_seed(1, 0), cli::image_seed(1, 1));
  EXPECT_NE(cli::image_seed(1, 0), cli::image_seed(2, 0));
  EXPECT_EQ(cli::image_seed(3, 4), cli::image_seed(3, 4));
}

}  // namespace
}  // namespace partlift
