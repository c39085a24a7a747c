#include "partlift/proposals.hpp"

#include <cmath>

namespace partlift {

std::vector<double> AnchorConfig::default_scales() {
  std::vector<double> s(10);
  for (int k = 0; k < 10; ++k) s[k] = 16.0 * std::pow(600.0 / 16.0, k / 9.0);
  return s;
}

void AnchorConfig::validate() const {
  if (aspect_ratios.empty() || scales.empty()) throw ValidationError("anchors: ratios and scales must be nonempty");
  if (!(stride > 0)) throw ValidationError("anchors: stride must be positive");
  for (double r : aspect_ratios)
    if (!(r > 0)) throw ValidationError("anchors: aspect ratios must be positive");
  for (double s : scales)
    if (!(s > 0)) throw ValidationError("anchors: scales must be positive");
}

std::vector<Box2D> generate_anchors(const AnchorConfig& cfg, int img_w, int img_h) {
  cfg.validate();
  const auto nx = static_cast<int>(std::ceil(img_w / cfg.stride));
  const auto ny = static_cast<int>(std::ceil(img_h / cfg.stride));
  std::vector<Box2D> out;
  out.reserve(static_cast<std::size_t>(nx) * ny * cfg.anchors_per_location());
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double cx = (ix + 0.5) * cfg.stride, cy = (iy + 0.5) * cfg.stride;
      for (double r : cfg.aspect_ratios) {
        const double sr = std::sqrt(r);
        for (double s : cfg.scales) out.push_back({cx, cy, s * sr, s / sr});
      }
    }
  }
  return out;
}

std::vector<ProposalLabel> assign_labels(const std::vector<Box2D>& proposals, const std::vector<Box2D>& gts,
                                         double pos_threshold) {
  std::vector<ProposalLabel> out(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double o = iou(proposals[i], gts[g]);
      if (o > best) {
        best = o;
        arg = g;
      }
    }
    if (best > pos_threshold) out[i] = {1, arg};
  }
  return out;
}

Box2D clip_box(const Box2D& box, int img_w, int img_h) {
  auto clip_axis = [](double lo, double hi, double limit) {
    lo = std::clamp(lo, 0.0, limit);
    hi = std::clamp(hi, 0.0, limit);
    if (hi - lo < 1.0) {
      if (lo + 1.0 <= limit) {
        hi = lo + 1.0;
      } else {
        hi = limit;
        lo = limit - 1.0;
      }
    }
    return std::pair{lo, hi};
  };
  const auto [x1, x2] = clip_axis(box.x1(), box.x2(), img_w);
  const auto [y1, y2] = clip_axis(box.y1(), box.y2(), img_h);
  return Box2D::from_corners(x1, y1, x2, y2);
}

std::vector<Box2D> refine_boxes(const std::vector<Box2D>& boxes, const std::vector<BoxDeltas>& deltas, int img_w,
                                int img_h) {
  if (boxes.size() != deltas.size()) throw ShapeMismatch("refine_boxes: boxes and deltas differ in length");
  std::vector<Box2D> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i)
    out.push_back(clip_box(decode_box_deltas(boxes[i], deltas[i]), img_w, img_h));
  return out;
}

}  // namespace partlift
