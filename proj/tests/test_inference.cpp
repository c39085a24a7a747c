#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "partlift/inference.hpp"
#include "partlift/scene_sim.hpp"
#include "support.hpp"

namespace partlift {
namespace {

constexpr double kYawTol = 0.1 * std::numbers::pi / 180;

TEST(SelectTemplate, ZeroEntryWins) {
  const ShapeBank bank = testing::bundled_bank();
  TemplateSimilarity sim = TemplateSimilarity::Constant(3, 4, 0.3);
  sim.col(2).setZero();
  const TemplateChoice c = select_template(sim, bank);
  EXPECT_EQ(c.model, 2u);
  EXPECT_EQ(c.dims, bank[2].dims);
}

TEST(SelectTemplate, SmallerLogNormWins) {
  ShapeBank bank = testing::bundled_bank();
  bank.models.resize(2);
  TemplateSimilarity sim(3, 2);
  sim.col(0) << 0.1, 0, 0;
  sim.col(1) << 0.2, 0.2, 0.2;
  EXPECT_EQ(select_template(sim, bank).model, 0u);
  EXPECT_NEAR(select_template(sim, bank).dims.w, bank[0].dims.w * std::exp(0.1), 1e-15);
}

TEST(SelectTemplate, TieGoesToLowestIndex) {
  const ShapeBank bank = testing::bundled_bank();
  EXPECT_EQ(select_template(TemplateSimilarity::Constant(3, 4, 0.05), bank).model, 0u);
}

TEST(SelectTemplate, LengthMismatch) {
  const ShapeBank bank = testing::bundled_bank();
  EXPECT_THROW(select_template(TemplateSimilarity::Zero(3, 3), bank), LengthMismatch);
}

TEST(SelectTemplate, EncodedBankTemplateSelectsItsModel) {
  const ShapeBank bank = testing::bundled_bank();
  for (std::size_t m = 0; m < bank.size(); ++m)
    EXPECT_EQ(select_template(encode_template_similarity(bank[m].dims, bank), bank).model, m);
}

struct ClosedLoop {
  Scene scene;
  std::vector<VehicleGT> gts;
  std::vector<DetectionRecord> records;
};

ClosedLoop closed_loop(std::uint64_t seed, const ShapeBank& bank, double jitter = 0.05) {
  SceneSpec spec;
  spec.seed = seed;
  spec.template_jitter = jitter;
  ClosedLoop c;
  c.scene = generate_scene(spec, bank);
  c.gts = generate_ground_truth(c.scene, bank);
  c.records = gt_to_records(c.gts, bank);
  return c;
}

TEST(Recover3D, NoiselessClosedLoop) {
  const ShapeBank bank = testing::bundled_bank();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ClosedLoop c = closed_loop(seed, bank);
    for (std::size_t i = 0; i < c.records.size(); ++i) {
      const Recovered3D r = recover_3d(c.records[i], bank, c.scene.camera);
      EXPECT_LT((r.box3d.center - c.gts[i].box3d.center).norm(), 0.01);
      EXPECT_LT(std::abs(normalize_angle(r.box3d.yaw - c.gts[i].box3d.yaw)), kYawTol);
      EXPECT_LT((r.parts3d - c.gts[i].parts3d).cwiseAbs().maxCoeff(), 0.01);
      EXPECT_EQ(r.model_id, c.gts[i].model_id);
    }
  }
}

TEST(Recover3D, DimsEqualSelectedTemplateExactly) {
  const ShapeBank bank = testing::bundled_bank();
  const ClosedLoop c = closed_loop(3, bank);
  ASSERT_FALSE(c.records.empty());
  for (const auto& rec : c.records) {
    const TemplateChoice t = select_template(rec.template_sim, bank);
    EXPECT_EQ(recover_3d(rec, bank, c.scene.camera).box3d.dims, t.dims);
  }
}

TEST(Recover3D, NoisyPartsStayNearOracleEnvelope) {
  const ShapeBank bank = testing::bundled_bank();
  const CameraIntrinsics k = default_camera();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  WeakAnnotation w;
  w.box3d = {Vec3(1.0, 0.8, 15), 0.6, bank[1].dims};
  const Scene scene = build_scene(k, {w}, bank);
  const auto gts = generate_ground_truth(scene, bank);
  for (int i = 0; i < 10; ++i) {
    auto rec = gt_to_records(gts, bank)[0];
    rec.parts2d += Points2::NullaryExpr(2, rec.parts2d.cols(), [&] { return n(rng); });
    const Recovered3D r = recover_3d(rec, bank, k);
    const Points3 shape = bank[1].shape;
    const PoseSolution oracle = solve_pose_oracle(shape, rec.parts2d, k, 0.5 * std::numbers::pi / 180);
    EXPECT_LE(r.reproj_rmse, oracle.reproj_rmse + 1e-6);
    // Envelope: oracle error plus a margin on the same instance.
    EXPECT_LT((r.box3d.center - w.box3d.center).norm(), (oracle.pose.t - w.box3d.center).norm() + 0.25);
  }
}

TEST(Recover3D, CollapsedPartsAreDegenerate) {
  const ShapeBank bank = testing::bundled_bank();
  DetectionRecord rec;
  rec.box = {{600, 180, 50, 30}, 1.0};
  rec.parts2d = Points2::Constant(2, 36, 0).colwise() + Vec2(600, 180);
  rec.vis_scores = VisibilityScores::Zero(36, 4);
  rec.template_sim = TemplateSimilarity::Zero(3, 4);
  EXPECT_THROW(recover_3d(rec, bank, default_camera()), DegenerateConfiguration);
}

TEST(RunInference, EmptyInput) {
  const auto out = run_inference({}, testing::bundled_bank(), default_camera());
  EXPECT_TRUE(out.results.empty());
  EXPECT_TRUE(out.failures.empty());
}

TEST(RunInference, DuplicatesCollapse) {
  const ShapeBank bank = testing::bundled_bank();
  ClosedLoop c = closed_loop(4, bank);
  ASSERT_FALSE(c.records.empty());
  auto dup = c.records[0];
  dup.box.score = 0.5;
  const auto out = run_inference({c.records[0], dup}, bank, c.scene.camera);
  ASSERT_EQ(out.results.size(), 1u);
  EXPECT_EQ(out.results[0].record.box.score, 1.0);
}

TEST(RunInference, TenRecordsThreeRedundant) {
  const ShapeBank bank = testing::bundled_bank();
  std::vector<VehicleGT> gts;
  CameraIntrinsics k;
  for (std::uint64_t seed = 10; gts.size() < 7; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.n_vehicles = 7;
    spec.max_box_iou = 0.0;
    const Scene s = generate_scene(spec, bank);
    k = s.camera;
    gts = generate_ground_truth(s, bank);
  }
  gts.resize(7);
  std::vector<DetectionRecord> records = gt_to_records(gts, bank);
  for (std::size_t i = 0; i < 3; ++i) {
    DetectionRecord r = records[i];
    r.box.score = 0.4;
    r.box.box.cx += 1;
    records.push_back(r);
  }
  ASSERT_EQ(records.size(), 10u);
  const auto out = run_inference(records, bank, k);
  ASSERT_EQ(out.results.size(), 7u);
  for (const auto& res : out.results) {
    EXPECT_EQ(res.record.box.score, 1.0);
    const auto it = std::find_if(gts.begin(), gts.end(), [&](const VehicleGT& g) { return g.box == res.record.box.box; });
    ASSERT_NE(it, gts.end());
    EXPECT_LT((res.recovered.box3d.center - it->box3d.center).norm(), 0.01);
    EXPECT_LT(std::abs(normalize_angle(res.recovered.box3d.yaw - it->box3d.yaw)), kYawTol);
  }
}

TEST(RunInference, OrderedByDescendingScoreAndImagesIndependent) {
  const ShapeBank bank = testing::bundled_bank();
  ClosedLoop c = closed_loop(5, bank);
  ASSERT_FALSE(c.records.empty());
  std::vector<DetectionRecord> recs;
  for (int img = 0; img < 3; ++img) {
    DetectionRecord r = c.records[0];
    r.image = img;
    r.box.score = 0.2 + 0.3 * img;
    recs.push_back(r);
  }
  const auto out = run_inference(recs, bank, c.scene.camera);
  ASSERT_EQ(out.results.size(), 3u);
  for (std::size_t i = 1; i < out.results.size(); ++i)
    EXPECT_GE(out.results[i - 1].record.box.score, out.results[i].record.box.score);
}

TEST(RunInference, FailuresAreReportedNotFatal) {
  const ShapeBank bank = testing::bundled_bank();
  ClosedLoop c = closed_loop(6, bank);
  ASSERT_FALSE(c.records.empty());
  DetectionRecord bad = c.records[0];
  bad.box.box.cx += 5000;
  bad.parts2d.setConstant(3.0);
  const auto out = run_inference({c.records[0], bad}, bank, c.scene.camera);
  EXPECT_EQ(out.results.size(), 1u);
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].record, 1u);
}

}  // namespace
}  // namespace partlift
