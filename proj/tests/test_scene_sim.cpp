#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "partlift/scene_sim.hpp"
#include "support.hpp"

namespace partlift {
namespace {

/// Independent overlap probe: a grid of points inside `a` tested for
/// containment in `b` through b's inverse pose.
bool sampled_overlap(const Box3D& a, const Box3D& b, int per_axis = 9) {
  const Mat3 ra = rotation_yaw(a.yaw), rb = rotation_yaw(b.yaw);
  const Vec3 ha = a.dims.xyz() / 2, hb = b.dims.xyz() / 2;
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j)
      for (int k = 0; k < per_axis; ++k) {
        const Vec3 f = Vec3(i, j, k) / (per_axis - 1) * 2 - Vec3::Ones();
        const Vec3 p = ra * f.cwiseProduct(ha) + a.center;
        const Vec3 q = rb.transpose() * (p - b.center);
        if ((q.cwiseAbs() - hb).maxCoeff() < 0) return true;
      }
  return false;
}

TEST(GenerateScene, ZeroVehicles) {
  SceneSpec spec;
  spec.n_vehicles = 0;
  const Scene s = generate_scene(spec, testing::bundled_bank());
  EXPECT_TRUE(s.vehicles.empty());
  EXPECT_TRUE(s.meshes.empty());
}

TEST(GenerateScene, DeterministicInSeed) {
  const ShapeBank bank = testing::bundled_bank();
  SceneSpec spec;
  spec.seed = 42;
  const Scene a = generate_scene(spec, bank), b = generate_scene(spec, bank);
  ASSERT_EQ(a.vehicles.size(), b.vehicles.size());
  for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
    EXPECT_EQ(a.vehicles[i].model_id, b.vehicles[i].model_id);
    EXPECT_EQ(a.vehicles[i].weak.box3d.center, b.vehicles[i].weak.box3d.center);
    EXPECT_EQ(a.vehicles[i].weak.box3d.yaw, b.vehicles[i].weak.box3d.yaw);
  }
  spec.seed = 43;
  EXPECT_NE(generate_scene(spec, bank).vehicles[0].weak.box3d.center, a.vehicles[0].weak.box3d.center);
}

TEST(GenerateScene, NoInterpenetrationOverHundredScenes) {
  const ShapeBank bank = testing::bundled_bank();
  int vehicles = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    const Scene s = generate_scene(spec, bank);
    vehicles += static_cast<int>(s.vehicles.size());
    for (std::size_t i = 0; i < s.vehicles.size(); ++i)
      for (std::size_t j = i + 1; j < s.vehicles.size(); ++j) {
        const Box3D& a = s.vehicles[i].weak.box3d;
        const Box3D& b = s.vehicles[j].weak.box3d;
        EXPECT_FALSE(sampled_overlap(a, b) || sampled_overlap(b, a)) << seed << " " << i << " " << j;
      }
  }
  EXPECT_EQ(vehicles, 500);
}

TEST(GenerateScene, VehiclesRestOnGroundInRange) {
  const ShapeBank bank = testing::bundled_bank();
  SceneSpec spec;
  spec.seed = 9;
  const Scene s = generate_scene(spec, bank);
  for (const auto& v : s.vehicles) {
    const Box3D& b = v.weak.box3d;
    EXPECT_NEAR(b.center.y() + b.dims.h / 2, spec.camera_height, 1e-12);
    EXPECT_GE(b.center.z(), spec.min_depth);
    EXPECT_LE(b.center.z(), spec.max_depth);
    EXPECT_EQ(b.dims, bank[bank.index_of(v.model_id)].dims);
  }
  EXPECT_EQ(s.meshes.size(), s.vehicles.size());
}

TEST(BoxesInterpenetrate, AgreesWithSamplingOracle) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> pos(-4, 4), yaw(-3.2, 3.2), d(1, 5);
  int overlaps = 0;
  for (int i = 0; i < 2000; ++i) {
    const Box3D a{Vec3(pos(rng), 0, pos(rng)), yaw(rng), {d(rng), d(rng), d(rng)}};
    const Box3D b{Vec3(pos(rng), pos(rng) / 2, pos(rng)), yaw(rng), {d(rng), d(rng), d(rng)}};
    const bool fn = boxes_interpenetrate(a, b);
    EXPECT_EQ(fn, boxes_interpenetrate(b, a));
    // The sampler can miss slivers, so only positive findings are binding.
    if (sampled_overlap(a, b) || sampled_overlap(b, a)) {
      ++overlaps;
      EXPECT_TRUE(fn) << i;
    }
  }
  EXPECT_GT(overlaps, 100);
  const Box3D a{Vec3(0, 0, 10), 0.3, {1.8, 1.5, 4.5}};
  const Box3D far{Vec3(0, 0, 20), 0.3, {1.8, 1.5, 4.5}};
  const Box3D above{Vec3(0, -3, 10), 0.3, {1.8, 1.5, 4.5}};
  EXPECT_FALSE(boxes_interpenetrate(a, far));
  EXPECT_FALSE(boxes_interpenetrate(a, above));
  EXPECT_TRUE(boxes_interpenetrate(a, a));
}

TEST(GtToRecords, IdealOutputs) {
  const ShapeBank bank = testing::bundled_bank();
  EXPECT_TRUE(gt_to_records({}, bank).empty());
  SceneSpec spec;
  spec.seed = 3;
  const Scene s = generate_scene(spec, bank);
  const auto gts = generate_ground_truth(s, bank);
  const auto recs = gt_to_records(gts, bank, 4);
  ASSERT_EQ(recs.size(), gts.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].box.score, 1.0);
    EXPECT_EQ(recs[i].box.box, gts[i].box);
    EXPECT_EQ(recs[i].image, 4);
    EXPECT_EQ(recs[i].parts2d, gts[i].parts2d);
    EXPECT_EQ(recs[i].vis_scores.rows(), 36);
    EXPECT_EQ(recs[i].template_sim.cols(), 4);
    EXPECT_EQ(visibility_argmax(recs[i].vis_scores), gts[i].visibility);
    EXPECT_EQ(recs[i].vis_scores.sum(), 36.0);
    EXPECT_EQ(recs[i].template_sim, encode_template_similarity(gts[i].dims, bank));
  }
}

TEST(GtToRecords, ClosedLoopThroughInference) {
  const ShapeBank bank = testing::bundled_bank();
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    const Scene s = generate_scene(spec, bank);
    const auto gts = generate_ground_truth(s, bank);
    const auto out = run_inference(gt_to_records(gts, bank), bank, s.camera);
    EXPECT_TRUE(out.failures.empty());
    for (const auto& r : out.results) {
      const auto it = std::find_if(gts.begin(), gts.end(), [&](const VehicleGT& g) { return g.box == r.record.box.box; });
      ASSERT_NE(it, gts.end());
      EXPECT_LT((r.recovered.box3d.center - it->box3d.center).norm(), 0.01);
    }
  }
}

std::vector<DetectionRecord> sample_records(std::uint64_t seed = 5) {
  const ShapeBank bank = testing::bundled_bank();
  SceneSpec spec;
  spec.seed = seed;
  const Scene s = generate_scene(spec, bank);
  return gt_to_records(generate_ground_truth(s, bank), bank);
}

TEST(PerturbRecords, ZeroNoiseIsIdentity) {
  const auto recs = sample_records();
  const auto out = perturb_records(recs, {}, 11);
  ASSERT_EQ(out.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(out[i].box.box, recs[i].box.box);
    EXPECT_EQ(out[i].parts2d, recs[i].parts2d);
    EXPECT_EQ(out[i].vis_scores, recs[i].vis_scores);
    EXPECT_EQ(out[i].template_sim, recs[i].template_sim);
  }
}

TEST(PerturbRecords, DeterministicPerSeed) {
  const auto recs = sample_records();
  NoiseSpec n;
  n.part_sigma = 1;
  n.vis_flip_prob = 0.3;
  const auto a = perturb_records(recs, n, 3), b = perturb_records(recs, n, 3), c = perturb_records(recs, n, 4);
  EXPECT_EQ(a[0].parts2d, b[0].parts2d);
  EXPECT_EQ(a[0].vis_scores, b[0].vis_scores);
  EXPECT_NE(a[0].parts2d, c[0].parts2d);
}

TEST(PerturbRecords, SigmaStatisticsWithinFivePercent) {
  const auto recs = sample_records();
  NoiseSpec n;
  n.part_sigma = 1.5;
  n.template_sigma = 0.05;
  n.box_sigma = 2.0;
  std::vector<double> parts, temps, boxes;
  for (std::uint64_t seed = 0; parts.size() < 10000 || boxes.size() < 10000; ++seed) {
    const auto out = perturb_records(recs, n, seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Eigen::MatrixXd dp = out[i].parts2d - recs[i].parts2d;
      const Eigen::MatrixXd dt = out[i].template_sim - recs[i].template_sim;
      parts.insert(parts.end(), dp.data(), dp.data() + dp.size());
      temps.insert(temps.end(), dt.data(), dt.data() + dt.size());
      boxes.push_back(out[i].box.box.cx - recs[i].box.box.cx);
      boxes.push_back(out[i].box.box.cy - recs[i].box.box.cy);
    }
  }
  auto stddev = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
  };
  EXPECT_NEAR(stddev(parts) / 1.5, 1.0, 0.05);
  EXPECT_NEAR(stddev(temps) / 0.05, 1.0, 0.05);
  EXPECT_NEAR(stddev(boxes) / 2.0, 1.0, 0.05);
}

TEST(PerturbRecords, FlipProbabilityOneResamplesUniformly) {
  const auto recs = sample_records();
  NoiseSpec n;
  n.vis_flip_prob = 1.0;
  std::size_t same = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto out = perturb_records(recs, n, seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto a = visibility_argmax(recs[i].vis_scores), b = visibility_argmax(out[i].vis_scores);
      for (std::size_t k = 0; k < a.size(); ++k) {
        same += a[k] == b[k];
        ++total;
      }
    }
  }
  // Only collisions of the 4-way resample keep a label.
  EXPECT_NEAR(static_cast<double>(same) / total, 0.25, 0.02);
}

TEST(NoiseSpec, NegativeRejected) {
  NoiseSpec n;
  n.part_sigma = -1;
  EXPECT_THROW(n.validate(), ValidationError);
  n = {};
  n.vis_flip_prob = 1.5;
  EXPECT_THROW(n.validate(), ValidationError);
}

TEST(PoseTrials, NoiselessTrialsMeetTolerance) {
  PoseTrialSpec spec;
  spec.trials = 100;
  spec.seed = 8;
  const auto trials = run_pose_trials(testing::bundled_bank(), spec);
  ASSERT_EQ(trials.size(), 100u);
  const PoseTrialSummary s = summarize_pose_trials(trials);
  EXPECT_EQ(s.failures, 0);
  EXPECT_GE(s.within_tolerance, 0.99);
}

}  // namespace
}  // namespace partlift
