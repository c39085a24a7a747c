#include "partlift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace partlift {

std::string_view to_string(Interpolation i) { return i == Interpolation::eleven_point ? "11" : "41"; }

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::moderate: return "moderate";
    case Difficulty::hard: return "hard";
    case Difficulty::all: return "all";
  }
  return "all";
}

Difficulty difficulty_from_string(std::string_view s) {
  for (auto d : {Difficulty::easy, Difficulty::moderate, Difficulty::hard, Difficulty::all})
    if (to_string(d) == s) return d;
  throw ParseError("unknown difficulty '" + std::string(s) + "'");
}

void EvalConfig::validate() const {
  if (!(iou_threshold > 0 && iou_threshold <= 1)) throw ValidationError("eval: iou_threshold must be in (0, 1]");
  for (double d : alp_distances)
    if (!(d > 0)) throw ValidationError("eval: ALP distances must be positive");
  if (!(part_dist_threshold > 0) || !(part_norm_height > 0))
    throw ValidationError("eval: part thresholds must be positive");
  if (!(template_rel_tol > 0 && template_rel_tol < 1)) throw ValidationError("eval: template_rel_tol must be in (0,1)");
}

MatchResult match_detections(const std::vector<ScoredBox>& dets, const std::vector<Box2D>& gts, double iou_threshold,
                             const std::vector<bool>& gt_ignore) {
  MatchResult out;
  out.det_status.assign(dets.size(), MatchStatus::false_positive);
  out.det_gt.assign(dets.size(), -1);
  out.gt_matched.assign(gts.size(), false);
  auto ignored = [&](std::size_t g) { return g < gt_ignore.size() && gt_ignore[g]; };

  for (std::size_t d : score_order(std::span<const ScoredBox>(dets))) {
    int best = -1;
    double best_iou = -1.0;
    bool hits_ignored = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double o = iou(dets[d].box, gts[g]);
      if (o < iou_threshold) continue;
      if (ignored(g)) {
        hits_ignored = true;
      } else if (!out.gt_matched[g] && o > best_iou) {
        best_iou = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      out.det_status[d] = MatchStatus::true_positive;
      out.det_gt[d] = best;
      out.gt_matched[static_cast<std::size_t>(best)] = true;
    } else if (hits_ignored) {
      out.det_status[d] = MatchStatus::ignored;
    }
  }
  return out;
}

std::vector<double> recall_samples(Interpolation interp) {
  const int n = interp == Interpolation::eleven_point ? 11 : 41;
  std::vector<double> r(n);
  for (int j = 0; j < n; ++j) r[j] = static_cast<double>(j) / (n - 1);
  return r;
}

double interpolated_precision(const std::vector<MatchedDetection>& dets, std::size_t n_gt, Interpolation interp,
                              const std::function<double(const MatchedDetection&)>& tp_weight) {
  if (n_gt == 0) return 0.0;
  std::vector<const MatchedDetection*> order;
  for (const auto& d : dets)
    if (d.status != MatchStatus::ignored) order.push_back(&d);
  std::stable_sort(order.begin(), order.end(),
                   [](const MatchedDetection* a, const MatchedDetection* b) { return a->score > b->score; });

  struct Point {
    double recall, precision;
  };
  std::vector<Point> curve;
  std::size_t tp = 0, total = 0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    ++total;
    if (order[i]->status == MatchStatus::true_positive) {
      ++tp;
      weighted += tp_weight(*order[i]);
    }
    if (i + 1 == order.size() || order[i + 1]->score != order[i]->score)
      curve.push_back({static_cast<double>(tp) / static_cast<double>(n_gt), weighted / static_cast<double>(total)});
  }

  const auto samples = recall_samples(interp);
  double sum = 0.0;
  for (double r : samples) {
    double best = 0.0;
    for (const auto& p : curve)
      if (p.recall >= r) best = std::max(best, p.precision);
    sum += best;
  }
  return sum / static_cast<double>(samples.size());
}

double average_precision(const std::vector<MatchedDetection>& dets, std::size_t n_gt, Interpolation interp) {
  return interpolated_precision(dets, n_gt, interp, [](const MatchedDetection&) { return 1.0; });
}

double average_orientation_similarity(const std::vector<MatchedDetection>& dets, std::size_t n_gt,
                                      Interpolation interp) {
  return interpolated_precision(dets, n_gt, interp, [](const MatchedDetection& d) {
    return (1.0 + std::cos(d.det_yaw - d.gt_yaw)) / 2.0;
  });
}

double average_localization_precision(const std::vector<MatchedDetection>& dets, std::size_t n_gt, double distance,
                                      Interpolation interp) {
  return interpolated_precision(dets, n_gt, interp, [distance](const MatchedDetection& d) {
    return (d.det_center - d.gt_center).norm() < distance ? 1.0 : 0.0;
  });
}

DifficultyThresholds difficulty_thresholds(Difficulty level) {
  switch (level) {
    case Difficulty::easy: return {40.0, 0, 0.15};
    case Difficulty::moderate: return {25.0, 1, 0.30};
    case Difficulty::hard: return {25.0, 2, 0.50};
    case Difficulty::all: break;
  }
  return {0.0, std::numeric_limits<int>::max(), std::numeric_limits<double>::infinity()};
}

DifficultySplit difficulty_filter(const std::vector<DifficultyMetadata>& gts, Difficulty level) {
  const auto th = difficulty_thresholds(level);
  DifficultySplit out;
  out.ignore.assign(gts.size(), false);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& g = gts[i];
    const bool keep = g.box_height >= th.min_height && g.occlusion <= th.max_occlusion &&
                      g.truncation <= th.max_truncation;
    if (keep) {
      out.kept.push_back(i);
    } else {
      out.ignore[i] = true;
    }
  }
  return out;
}

std::optional<double> part_localization_rate(const std::vector<Points2>& det_parts,
                                             const std::vector<Points2>& gt_parts,
                                             const std::vector<double>& gt_box_heights, const EvalConfig& cfg) {
  if (det_parts.size() != gt_parts.size() || det_parts.size() != gt_box_heights.size())
    throw ShapeMismatch("part_localization_rate: input lengths differ");
  std::size_t good = 0, total = 0;
  for (std::size_t i = 0; i < det_parts.size(); ++i) {
    if (det_parts[i].cols() != gt_parts[i].cols()) throw ShapeMismatch("part_localization_rate: part counts differ");
    const double scale = cfg.part_norm_height / gt_box_heights[i];
    const Eigen::VectorXd err = (det_parts[i] - gt_parts[i]).colwise().norm().transpose() * scale;
    good += static_cast<std::size_t>((err.array() < cfg.part_dist_threshold).count());
    total += static_cast<std::size_t>(err.size());
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(good) / static_cast<double>(total);
}

std::optional<double> visibility_accuracy(const std::vector<VisibilityVector>& det,
                                          const std::vector<VisibilityVector>& gt) {
  if (det.size() != gt.size()) throw ShapeMismatch("visibility_accuracy: input lengths differ");
  std::size_t good = 0, total = 0;
  for (std::size_t i = 0; i < det.size(); ++i) {
    if (det[i].size() != gt[i].size()) throw ShapeMismatch("visibility_accuracy: part counts differ");
    for (std::size_t k = 0; k < det[i].size(); ++k) good += det[i][k] == gt[i][k];
    total += det[i].size();
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(good) / static_cast<double>(total);
}

bool template_correct(const Template3D& det, const Template3D& gt, double rel_tol) {
  return std::abs((gt.w - det.w) / gt.w) < rel_tol && std::abs((gt.h - det.h) / gt.h) < rel_tol &&
         std::abs((gt.l - det.l) / gt.l) < rel_tol;
}

std::optional<double> template_accuracy(const std::vector<Template3D>& det, const std::vector<Template3D>& gt,
                                        double rel_tol) {
  if (det.size() != gt.size()) throw ShapeMismatch("template_accuracy: input lengths differ");
  if (det.empty()) return std::nullopt;
  std::size_t good = 0;
  for (std::size_t i = 0; i < det.size(); ++i) good += template_correct(det[i], gt[i], rel_tol);
  return static_cast<double>(good) / static_cast<double>(det.size());
}

VisibilityVector visibility_argmax(const VisibilityScores& scores) {
  VisibilityVector out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index k = 0; k < scores.rows(); ++k) {
    Eigen::Index arg;
    scores.row(k).maxCoeff(&arg);
    out[static_cast<std::size_t>(k)] = static_cast<Visibility>(arg);
  }
  return out;
}

EvalReport evaluate(const std::vector<EvalImage>& images, const EvalConfig& cfg) {
  cfg.validate();
  EvalReport report;
  report.n_images = images.size();
  std::vector<MatchedDetection> pooled;
  std::vector<Points2> det_parts, gt_parts;
  std::vector<double> gt_heights;
  std::vector<VisibilityVector> det_vis, gt_vis;
  std::vector<Template3D> det_dims, gt_dims;

  for (const auto& img : images) {
    std::vector<DifficultyMetadata> meta;
    std::vector<Box2D> gt_boxes;
    for (const auto& g : img.gts) {
      meta.push_back({g.box.h, g.occlusion.value_or(0), g.truncation.value_or(0.0)});
      gt_boxes.push_back(g.box);
    }
    const DifficultySplit split = difficulty_filter(meta, cfg.difficulty);
    report.n_gt += split.kept.size();
    std::vector<ScoredBox> boxes;
    for (const auto& d : img.dets) boxes.push_back(d.box);
    report.n_det += boxes.size();
    const MatchResult m = match_detections(boxes, gt_boxes, cfg.iou_threshold, split.ignore);

    for (std::size_t i = 0; i < img.dets.size(); ++i) {
      const auto& d = img.dets[i];
      MatchedDetection md;
      md.score = d.box.score;
      md.status = m.det_status[i];
      md.det_yaw = d.box3d.yaw;
      md.det_center = d.box3d.center;
      if (md.status == MatchStatus::true_positive) {
        const auto& g = img.gts[static_cast<std::size_t>(m.det_gt[i])];
        md.gt_yaw = g.box3d.yaw;
        md.gt_center = g.box3d.center;
        if (d.parts2d && g.parts2d) {
          det_parts.push_back(*d.parts2d);
          gt_parts.push_back(*g.parts2d);
          gt_heights.push_back(g.box.h);
        }
        if (d.visibility && g.visibility) {
          det_vis.push_back(*d.visibility);
          gt_vis.push_back(*g.visibility);
        }
        det_dims.push_back(d.box3d.dims);
        gt_dims.push_back(g.box3d.dims);
      }
      pooled.push_back(md);
    }
  }

  report.ap = average_precision(pooled, report.n_gt, cfg.interpolation);
  report.aos = average_orientation_similarity(pooled, report.n_gt, cfg.interpolation);
  for (double dist : cfg.alp_distances)
    report.alp[dist] = average_localization_precision(pooled, report.n_gt, dist, cfg.interpolation);
  report.part_loc = part_localization_rate(det_parts, gt_parts, gt_heights, cfg);
  report.vis_acc = visibility_accuracy(det_vis, gt_vis);
  report.template_acc = template_accuracy(det_dims, gt_dims, cfg.template_rel_tol);
  return report;
}

}  // namespace partlift
