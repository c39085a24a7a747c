#include "partlift/inference.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace partlift {

TemplateChoice select_template(const TemplateSimilarity& sim, const ShapeBank& bank) {
  if (static_cast<std::size_t>(sim.cols()) != bank.size())
    throw LengthMismatch("select_template: similarity has " + std::to_string(sim.cols()) + " entries, bank has " +
                         std::to_string(bank.size()));
  if (bank.models.empty()) throw ValidationError("select_template: empty bank");
  TemplateChoice out;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < sim.cols(); ++m) {
    const double d = sim.col(m).norm();
    if (d < best) {
      best = d;
      out.model = static_cast<std::size_t>(m);
    }
  }
  out.dims = apply_template_similarity(bank[out.model].dims, sim.col(static_cast<Eigen::Index>(out.model)));
  return out;
}

Recovered3D recover_3d(const DetectionRecord& det, const ShapeBank& bank, const CameraIntrinsics& k,
                       const PnPOptions& opts) {
  if (det.parts2d.cols() != bank.n_parts)
    throw LengthMismatch("recover_3d: record has " + std::to_string(det.parts2d.cols()) + " parts, bank expects " +
                         std::to_string(bank.n_parts));
  const TemplateChoice choice = select_template(det.template_sim, bank);
  const BankModel& model = bank[choice.model];
  const Points3 shape = scale_shape_to_template(model.shape, model.dims, choice.dims);
  Recovered3D out;
  out.solution = solve_pose(shape, det.parts2d, k, opts);
  out.box3d = {out.solution.pose.t, out.solution.pose.yaw, choice.dims};
  if (opts.mode == PnPMode::full_6dof) {
    out.parts3d = out.solution.rotation * shape;
    out.parts3d.colwise() += out.solution.pose.t;
  } else {
    out.parts3d = transform_points(out.solution.pose, shape);
  }
  out.model_id = model.id;
  out.reproj_rmse = out.solution.reproj_rmse;
  return out;
}

InferenceOutput run_inference(const std::vector<DetectionRecord>& records, const ShapeBank& bank,
                              const CameraIntrinsics& k, double nms_threshold, const PnPOptions& opts) {
  std::map<int, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < records.size(); ++i) by_image[records[i].image].push_back(i);

  std::vector<std::size_t> kept;
  for (const auto& [image, idx] : by_image) {
    std::vector<ScoredBox> boxes;
    for (std::size_t i : idx) boxes.push_back(records[i].box);
    for (std::size_t j : nms(boxes, nms_threshold)) kept.push_back(idx[j]);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].box.score != records[b].box.score) return records[a].box.score > records[b].box.score;
    return a < b;
  });

  InferenceOutput out;
  for (std::size_t i : kept) {
    try {
      out.results.push_back({records[i], recover_3d(records[i], bank, k, opts)});
    } catch (const Error& e) {
      out.failures.push_back({i, e.what()});
    }
  }
  return out;
}

}  // namespace partlift
