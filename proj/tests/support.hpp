#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "partlift/annotator.hpp"
#include "partlift/metrics.hpp"
#include "partlift/shape_bank.hpp"

namespace partlift::testing {

inline std::string data_path(const std::string& name) { return std::string(PARTLIFT_DATA_DIR) + "/" + name; }

inline ShapeBank bundled_bank() { return load_bank(data_path("synthetic_bank.json")); }

inline CameraIntrinsics toy_camera() { return {700, 700, 600, 180, 1200, 360}; }

/// Box model of the given template. Parts are the six face centers
/// (-x, +x, -y, +y, -z, +z); each face's two triangles carry that part's label.
inline ShapeBank cube_bank(const Template3D& dims = {2.0, 1.5, 4.0}) {
  BankModel m;
  m.id = "cube";
  m.dims = dims;
  const Vec3 h = dims.xyz() / 2;
  m.mesh.vertices.resize(3, 8);
  for (int i = 0; i < 8; ++i)
    m.mesh.vertices.col(i) = Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
  m.shape.resize(3, 6);
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const int part = 2 * axis + side;
      Vec3 c = Vec3::Zero();
      c[axis] = side ? h[axis] : -h[axis];
      m.shape.col(part) = c;
      // The four corners with the matching coordinate, in cyclic order.
      std::vector<int> quad;
      for (int i = 0; i < 8; ++i)
        if (((i >> axis) & 1) == side) quad.push_back(i);
      std::swap(quad[2], quad[3]);
      m.mesh.faces.push_back({{quad[0], quad[1], quad[2]}, part + 1});
      m.mesh.faces.push_back({{quad[0], quad[2], quad[3]}, part + 1});
    }
  }
  ShapeBank bank;
  bank.n_parts = 6;
  bank.models.push_back(m);
  validate_bank(bank);
  return bank;
}

// ---- NMS oracle --------------------------------------------------------------

/// Enumerates every subset and returns the unique one that is consistent with
/// greedy suppression: a box belongs to it iff it overlaps no earlier member
/// by more than the threshold. Returned in descending score order.
inline std::vector<std::size_t> nms_by_enumeration(const std::vector<ScoredBox>& dets, double thr) {
  const std::size_t n = dets.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score != dets[b].score ? dets[a].score > dets[b].score : a < b;
  });
  std::vector<std::size_t> found;
  int solutions = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    bool consistent = true;
    for (std::size_t p = 0; p < n && consistent; ++p) {
      const std::size_t i = order[p];
      bool blocked = false;
      for (std::size_t q = 0; q < p; ++q)
        if ((mask >> order[q]) & 1u) blocked = blocked || iou(dets[i].box, dets[order[q]].box) > thr;
      consistent = ((mask >> i) & 1u) == (blocked ? 0u : 1u);
    }
    if (!consistent) continue;
    ++solutions;
    found.clear();
    for (std::size_t i : order)
      if ((mask >> i) & 1u) found.push_back(i);
  }
  if (solutions != 1) return {};
  return found;
}

// ---- curve-metric oracle -----------------------------------------------------

struct OracleDet {
  int image = 0;
  double score = 0;
  Box2D box;
  double yaw = 0;
  Vec3 center = Vec3::Zero();
};

struct OracleGt {
  int image = 0;
  Box2D box;
  bool ignore = false;
  double yaw = 0;
  Vec3 center = Vec3::Zero();
};

enum class OracleMetric { ap, aos, alp };

/// For every distinct score threshold, re-matches the detections at or above
/// it from scratch and records (recall, precision); then takes the max
/// precision at recall >= r for each recall sample.
inline double curve_metric_by_enumeration(const std::vector<OracleDet>& dets, const std::vector<OracleGt>& gts,
                                          double iou_thr, int samples, OracleMetric metric, double alp_dist = 1.0) {
  std::size_t n_gt = 0;
  for (const auto& g : gts) n_gt += !g.ignore;
  if (n_gt == 0) return 0.0;

  std::vector<double> thresholds;
  for (const auto& d : dets) thresholds.push_back(d.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<std::pair<double, double>> points;
  for (double tau : thresholds) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].score >= tau) active.push_back(i);
    std::stable_sort(active.begin(), active.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    std::vector<bool> taken(gts.size(), false);
    double counted = 0, tp = 0, weight = 0;
    for (std::size_t i : active) {
      const auto& d = dets[i];
      int best = -1;
      double best_o = -1;
      bool near_ignored = false;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (gts[g].image != d.image) continue;
        const double o = iou(d.box, gts[g].box);
        if (o < iou_thr) continue;
        if (gts[g].ignore) {
          near_ignored = true;
        } else if (!taken[g] && o > best_o) {
          best_o = o;
          best = static_cast<int>(g);
        }
      }
      if (best < 0 && near_ignored) continue;
      counted += 1;
      if (best < 0) continue;
      taken[static_cast<std::size_t>(best)] = true;
      tp += 1;
      const auto& g = gts[static_cast<std::size_t>(best)];
      switch (metric) {
        case OracleMetric::ap: weight += 1; break;
        case OracleMetric::aos: weight += (1 + std::cos(d.yaw - g.yaw)) / 2; break;
        case OracleMetric::alp: weight += (d.center - g.center).norm() < alp_dist ? 1 : 0; break;
      }
    }
    if (counted > 0) points.emplace_back(tp / static_cast<double>(n_gt), weight / counted);
  }

  double sum = 0;
  for (int j = 0; j < samples; ++j) {
    const double r = static_cast<double>(j) / (samples - 1);
    double best = 0;
    for (const auto& [rec, prec] : points)
      if (rec >= r) best = std::max(best, prec);
    sum += best;
  }
  return sum / samples;
}

// ---- z-buffer visibility oracle ------------------------------------------------

/// Rasterizes every placed mesh into a depth buffer `factor` times the image
/// resolution, storing the nearest surface's owner and face per sample.
class DepthBuffer {
 public:
  DepthBuffer(const Scene& scene, int factor) : scene_(scene), k_(scene.camera), factor_(factor) {
    w_ = k_.img_w * factor;
    h_ = k_.img_h * factor;
    samples_.assign(static_cast<std::size_t>(w_) * h_, Sample{});
    for (std::size_t m = 0; m < scene.meshes.size(); ++m)
      for (std::size_t f = 0; f < scene.meshes[m].faces.size(); ++f) draw(m, f);
  }

  /// Same decision rule as the ray caster. The raster sample containing the
  /// part's projection names the front surface; its depth is then taken on
  /// that triangle's plane along the part's own ray, so grazing faces do not
  /// pick up the sample-center offset.
  Visibility classify(std::size_t vehicle, int part_index, const Vec3& part, double eps) const {
    const double u = k_.fx * part.x() / part.z() + k_.cx;
    const double v = k_.fy * part.y() / part.z() + k_.cy;
    if (!(u >= 0 && u < k_.img_w && v >= 0 && v < k_.img_h)) return Visibility::truncated;
    const int px = std::min(w_ - 1, static_cast<int>(std::floor(u * factor_)));
    const int py = std::min(h_ - 1, static_cast<int>(std::floor(v * factor_)));
    const Sample& smp = samples_[static_cast<std::size_t>(py) * w_ + px];
    if (smp.mesh < 0) return Visibility::visible;
    const PlacedMesh& mesh = scene_.meshes[static_cast<std::size_t>(smp.mesh)];
    const MeshFace& f = mesh.faces[static_cast<std::size_t>(smp.face)];
    const Vec3 a = mesh.vertices.col(f.v[0]);
    const Vec3 n = (mesh.vertices.col(f.v[1]) - a).cross(mesh.vertices.col(f.v[2]) - a);
    const double denom = n.dot(part);
    // s * part lies on the plane; s < 1 is in front of the part.
    const double s = std::abs(denom) > 0 ? n.dot(a) / denom : 1.0;
    if (!(s < 1 - eps / part.norm())) return Visibility::visible;
    if (mesh.vehicle != vehicle) return Visibility::occluded;
    return f.part_label == part_index + 1 ? Visibility::visible : Visibility::self_occluded;
  }

 private:
  struct Sample {
    double depth = std::numeric_limits<double>::infinity();
    int mesh = -1;
    int face = -1;
  };

  void draw(std::size_t m, std::size_t fi) {
    const PlacedMesh& mesh = scene_.meshes[m];
    const MeshFace& f = mesh.faces[fi];
    Eigen::Matrix<double, 2, 3> s;
    Eigen::Vector3d inv_z;
    for (int c = 0; c < 3; ++c) {
      const Vec3 p = mesh.vertices.col(f.v[c]);
      if (p.z() <= 1e-6) return;
      s(0, c) = (k_.fx * p.x() / p.z() + k_.cx) * factor_;
      s(1, c) = (k_.fy * p.y() / p.z() + k_.cy) * factor_;
      inv_z[c] = 1.0 / p.z();
    }
    const double area = edge(s.col(0), s.col(1), s.col(2));
    if (std::abs(area) < 1e-12) return;
    const int x0 = std::max(0, static_cast<int>(std::floor(s.row(0).minCoeff())));
    const int x1 = std::min(w_ - 1, static_cast<int>(std::ceil(s.row(0).maxCoeff())));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.row(1).minCoeff())));
    const int y1 = std::min(h_ - 1, static_cast<int>(std::ceil(s.row(1).maxCoeff())));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 q(x + 0.5, y + 0.5);
        const double b0 = edge(s.col(1), s.col(2), q) / area;
        const double b1 = edge(s.col(2), s.col(0), q) / area;
        const double b2 = 1.0 - b0 - b1;
        if (b0 < 0 || b1 < 0 || b2 < 0) continue;
        // 1/z is affine in screen space.
        const double z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
        Sample& smp = samples_[static_cast<std::size_t>(y) * w_ + x];
        if (z < smp.depth) smp = {z, static_cast<int>(m), static_cast<int>(fi)};
      }
    }
  }

  static double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
  }

  const Scene& scene_;
  CameraIntrinsics k_;
  int factor_;
  int w_ = 0, h_ = 0;
  std::vector<Sample> samples_;
};

// ---- finite differences ------------------------------------------------------

/// Central-difference Jacobian of a vector function.
template <class Fn>
Eigen::MatrixXd numeric_jacobian(Fn f, const Eigen::VectorXd& x, double step) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    j.col(i) = (f(xp) - f(xm)) / (2 * step);
  }
  return j;
}

}  // namespace partlift::testing
