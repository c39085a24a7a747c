#include "partlift/kitti.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "partlift/errors.hpp"

namespace partlift {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string f; in >> f;) out.push_back(f);
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("not a number: '" + s + "'", line);
  return v;
}

int to_int(const std::string& s, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("not an integer: '" + s + "'", line);
  return v;
}

/// Reads lines, handing each non-blank one to `fn` with its 1-based number.
template <class Fn>
void for_each_line(std::string_view text, Fn fn) {
  std::istringstream in{std::string(text)};
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, n);
  }
}

void append_fixed(std::string& out, double v) {
  char buf[64];
  // Avoid "-0.00" for values that round to zero.
  if (std::abs(v) < 0.005) v = 0.0;
  std::snprintf(buf, sizeof buf, " %.2f", v);
  out += buf;
}

}  // namespace

bool is_vehicle_class(std::string_view type) { return type == "Car" || type == "Van" || type == "Truck"; }

KittiLabels parse_kitti_labels(std::string_view text) {
  KittiLabels labels;
  for_each_line(text, [&](const std::string& line, std::size_t n) {
    const auto f = split_fields(line);
    if (f.size() != 15 && f.size() != 16)
      throw ParseError("expected 15 or 16 fields, got " + std::to_string(f.size()), n);
    KittiObject o;
    o.type = f[0];
    o.truncation = to_double(f[1], n);
    o.occlusion = to_int(f[2], n);
    o.alpha = to_double(f[3], n);
    o.box = Box2D::from_corners(to_double(f[4], n), to_double(f[5], n), to_double(f[6], n), to_double(f[7], n));
    o.box3d.dims = {to_double(f[9], n), to_double(f[8], n), to_double(f[10], n)};
    const Vec3 bottom(to_double(f[11], n), to_double(f[12], n), to_double(f[13], n));
    o.box3d.center = bottom - Vec3(0, o.box3d.dims.h / 2, 0);
    o.box3d.yaw = to_double(f[14], n);
    if (f.size() == 16) o.score = to_double(f[15], n);
    labels.objects.push_back(std::move(o));
  });
  return labels;
}

std::string write_kitti_labels(const KittiLabels& labels) {
  std::string out;
  for (const auto& o : labels.objects) {
    out += o.type;
    append_fixed(out, o.truncation);
    out += " " + std::to_string(o.occlusion);
    append_fixed(out, o.alpha);
    for (double v : {o.box.x1(), o.box.y1(), o.box.x2(), o.box.y2()}) append_fixed(out, v);
    const auto& d = o.box3d.dims;
    for (double v : {d.h, d.w, d.l}) append_fixed(out, v);
    const Vec3 bottom = o.box3d.center + Vec3(0, d.h / 2, 0);
    for (double v : {bottom.x(), bottom.y(), bottom.z()}) append_fixed(out, v);
    append_fixed(out, o.box3d.yaw);
    if (o.score) append_fixed(out, *o.score);
    out += '\n';
  }
  return out;
}

CameraIntrinsics parse_kitti_calib(std::string_view text, int img_w, int img_h) {
  std::optional<CameraIntrinsics> k;
  for_each_line(text, [&](const std::string& line, std::size_t n) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'key: values'", n);
    if (line.substr(0, colon) != "P2") return;
    const auto f = split_fields(line.substr(colon + 1));
    if (f.size() != 12) throw ParseError("P2 needs 12 values, got " + std::to_string(f.size()), n);
    k = CameraIntrinsics{to_double(f[0], n), to_double(f[5], n), to_double(f[2], n), to_double(f[6], n), img_w, img_h};
    try {
      k->validate();
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), n);
    }
  });
  if (!k) throw MissingCalib("calib has no P2 row");
  return *k;
}

std::vector<const KittiObject*> kitti_objects(const KittiLabels& labels, bool include_all) {
  std::vector<const KittiObject*> out;
  for (const auto& o : labels.objects)
    if (!o.dont_care() && (include_all || is_vehicle_class(o.type))) out.push_back(&o);
  return out;
}

std::vector<Box2D> kitti_ignore_regions(const KittiLabels& labels) {
  std::vector<Box2D> out;
  for (const auto& o : labels.objects)
    if (o.dont_care()) out.push_back(o.box);
  return out;
}

WeakAnnotation to_weak_annotation(const KittiObject& obj) {
  WeakAnnotation w;
  w.box3d = obj.box3d;
  w.box3d.yaw = normalize_angle(obj.box3d.yaw);
  w.box2d = obj.box;
  w.truncation = obj.truncation;
  w.occlusion = obj.occlusion;
  return w;
}

KittiFrame parse_kitti(std::string_view label_text, std::string_view calib_text) {
  return {parse_kitti_labels(label_text), parse_kitti_calib(calib_text)};
}

}  // namespace partlift
