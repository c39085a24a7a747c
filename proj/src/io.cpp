#include "partlift/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "partlift/errors.hpp"

namespace partlift {

using nlohmann::json;

namespace {

/// Strict view of one JSON object: every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where, std::size_t line) : j_(j), where_(std::move(where)), line_(line) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(where_ + ": " + msg, line_); }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  /// Marks an optional key as consumed; true when present and not null.
  bool present(const std::string& key) {
    used_.insert(key);
    return has(key);
  }

  const json& at(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) fail("missing '" + key + "'");
    return j_.at(key);
  }

  double number(const std::string& key) { return as_number(at(key), key); }

  template <class Int>
  Int integer(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number_integer()) fail("'" + key + "' must be an integer");
    return v.get<Int>();
  }

  std::string string(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) fail("'" + key + "' must be a string");
    return v.get<std::string>();
  }

  /// Optional fields may be absent or null.
  std::optional<double> opt_number(const std::string& key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    return as_number(j_.at(key), key);
  }

  std::optional<int> opt_integer(const std::string& key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    if (!j_.at(key).is_number_integer()) fail("'" + key + "' must be an integer");
    return j_.at(key).get<int>();
  }

  double as_number(const json& v, const std::string& key) const {
    if (!v.is_number()) fail("'" + key + "' must be a number");
    return v.get<double>();
  }

  Eigen::MatrixXd matrix(const std::string& key, Eigen::Index row_len) {
    const json& v = at(key);
    if (!v.is_array()) fail("'" + key + "' must be an array");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), row_len);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json& row = v[i];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != row_len)
        fail("'" + key + "' rows must have " + std::to_string(row_len) + " values");
      for (Eigen::Index c = 0; c < row_len; ++c)
        out(static_cast<Eigen::Index>(i), c) = as_number(row[static_cast<std::size_t>(c)], key);
    }
    return out;
  }

  std::vector<double> fixed(const std::string& key, std::size_t n) {
    const Eigen::MatrixXd m = matrix_row(key, n);
    return {m.data(), m.data() + m.size()};
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) fail("unknown key '" + item.key() + "'");
  }

  std::size_t line() const { return line_; }
  const std::string& where() const { return where_; }

 private:
  Eigen::MatrixXd matrix_row(const std::string& key, std::size_t n) {
    const json& v = at(key);
    if (!v.is_array() || v.size() != n) fail("'" + key + "' must have " + std::to_string(n) + " values");
    Eigen::MatrixXd out(1, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out(0, static_cast<Eigen::Index>(i)) = as_number(v[i], key);
    return out;
  }

  const json& j_;
  std::string where_;
  std::size_t line_;
  std::set<std::string> used_;
};

json rows(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(std::move(row));
  }
  return out;
}

json box_json(const Box2D& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

Box2D read_box(ObjectReader& r, const std::string& key) {
  const auto v = r.fixed(key, 4);
  return {v[0], v[1], v[2], v[3]};
}

json box3d_json(const Box3D& b) {
  return {{"center", json::array({b.center.x(), b.center.y(), b.center.z()})},
          {"yaw", b.yaw},
          {"dims", json::array({b.dims.w, b.dims.h, b.dims.l})}};
}

Box3D read_box3d(ObjectReader& parent, const std::string& key) {
  ObjectReader r(parent.at(key), parent.where() + "." + key, parent.line());
  Box3D b;
  const auto c = r.fixed("center", 3);
  b.center = {c[0], c[1], c[2]};
  b.yaw = r.number("yaw");
  const auto d = r.fixed("dims", 3);
  b.dims = {d[0], d[1], d[2]};
  r.finish();
  return b;
}

json visibility_json(const VisibilityVector& v) {
  json out = json::array();
  for (auto x : v) out.push_back(std::string(to_string(x)));
  return out;
}

VisibilityVector read_visibility(ObjectReader& r, const std::string& key) {
  const json& v = r.at(key);
  if (!v.is_array()) r.fail("'" + key + "' must be an array");
  VisibilityVector out;
  for (const auto& x : v) {
    if (!x.is_string()) r.fail("'" + key + "' entries must be strings");
    try {
      out.push_back(visibility_from_string(x.get<std::string>()));
    } catch (const Error& e) {
      r.fail(e.what());
    }
  }
  return out;
}

json camera_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"img_w", k.img_w}, {"img_h", k.img_h}};
}

CameraIntrinsics read_camera(const json& j, const std::string& where, std::size_t line) {
  ObjectReader r(j, where, line);
  CameraIntrinsics k{r.number("fx"), r.number("fy"), r.number("cx"), r.number("cy"), r.integer<int>("img_w"),
                     r.integer<int>("img_h")};
  r.finish();
  try {
    k.validate();
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  return k;
}

json header_json(const FileHeader& h) {
  json inner = {{"kind", h.kind}};
  if (h.seed) inner["seed"] = *h.seed;
  return {{"header", inner}};
}

template <class T, class Fn>
std::string write_lines(const std::vector<T>& items, const std::optional<FileHeader>& header, Fn to_line) {
  std::string out;
  if (header) out += header_json(*header).dump() + "\n";
  for (const auto& x : items) out += to_line(x) + "\n";
  return out;
}

template <class T, class Fn>
JsonLines<T> read_lines(std::string_view text, const std::string& kind, Fn parse) {
  JsonLines<T> out;
  std::istringstream in{std::string(text)};
  std::size_t n = 0;
  bool first = true;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), n);
    }
    if (first && j.is_object() && j.contains("header")) {
      ObjectReader outer(j, "header line", n);
      ObjectReader r(outer.at("header"), "header", n);
      FileHeader h;
      h.kind = r.string("kind");
      if (r.present("seed")) h.seed = r.integer<std::uint64_t>("seed");
      r.finish();
      outer.finish();
      if (h.kind != kind) throw ParseError("expected a '" + kind + "' file, header says '" + h.kind + "'", n);
      out.header = h;
    } else {
      out.items.push_back(parse(j, n));
    }
    first = false;
  }
  return out;
}

json record_json(const DetectionRecord& r) {
  return {{"image", r.image},
          {"score", r.box.score},
          {"box", box_json(r.box.box)},
          {"parts2d", rows(r.parts2d.transpose())},
          {"vis_scores", rows(r.vis_scores)},
          {"template_sim", rows(r.template_sim.transpose())}};
}

DetectionRecord parse_record(const json& j, std::size_t line) {
  ObjectReader r(j, "record", line);
  DetectionRecord d;
  d.image = r.integer<int>("image");
  d.box.score = r.number("score");
  d.box.box = read_box(r, "box");
  d.parts2d = r.matrix("parts2d", 2).transpose();
  d.vis_scores = r.matrix("vis_scores", kVisibilityClasses);
  d.template_sim = r.matrix("template_sim", 3).transpose();
  r.finish();
  if (d.vis_scores.rows() != d.parts2d.cols()) r.fail("vis_scores and parts2d lengths differ");
  return d;
}

json gt_json(const GroundTruthRecord& rec) {
  const VehicleGT& g = rec.gt;
  json j = {{"image", rec.image},
            {"model_id", g.model_id},
            {"box", box_json(g.box)},
            {"box3d", box3d_json(g.box3d)},
            {"parts2d", rows(g.parts2d.transpose())},
            {"parts3d", rows(g.parts3d.transpose())},
            {"visibility", visibility_json(g.visibility)}};
  if (g.truncation) j["truncation"] = *g.truncation;
  if (g.occlusion) j["occlusion"] = *g.occlusion;
  return j;
}

GroundTruthRecord parse_gt(const json& j, std::size_t line) {
  ObjectReader r(j, "ground truth", line);
  GroundTruthRecord rec;
  VehicleGT& g = rec.gt;
  rec.image = r.integer<int>("image");
  g.model_id = r.string("model_id");
  g.box = read_box(r, "box");
  g.box3d = read_box3d(r, "box3d");
  g.dims = g.box3d.dims;
  g.parts2d = r.matrix("parts2d", 2).transpose();
  g.parts3d = r.matrix("parts3d", 3).transpose();
  g.visibility = read_visibility(r, "visibility");
  g.truncation = r.opt_number("truncation");
  g.occlusion = r.opt_integer("occlusion");
  r.finish();
  return rec;
}

json detection_json(const DetectionOutput& d) {
  return {{"image", d.image},
          {"score", d.box.score},
          {"box", box_json(d.box.box)},
          {"box3d", box3d_json(d.box3d)},
          {"model_id", d.model_id},
          {"reproj_rmse", d.reproj_rmse},
          {"parts2d", rows(d.parts2d.transpose())},
          {"visibility", visibility_json(d.visibility)}};
}

DetectionOutput parse_detection(const json& j, std::size_t line) {
  ObjectReader r(j, "detection", line);
  DetectionOutput d;
  d.image = r.integer<int>("image");
  d.box.score = r.number("score");
  d.box.box = read_box(r, "box");
  d.box3d = read_box3d(r, "box3d");
  d.model_id = r.string("model_id");
  d.reproj_rmse = r.number("reproj_rmse");
  d.parts2d = r.matrix("parts2d", 2).transpose();
  d.visibility = read_visibility(r, "visibility");
  r.finish();
  return d;
}

json scene_json(const SceneRecord& rec) {
  json vehicles = json::array();
  for (const auto& v : rec.scene.vehicles) {
    json jv = {{"model_id", v.model_id}, {"box3d", box3d_json(v.weak.box3d)}};
    if (v.weak.box2d) jv["box2d"] = box_json(*v.weak.box2d);
    if (v.weak.truncation) jv["truncation"] = *v.weak.truncation;
    if (v.weak.occlusion) jv["occlusion"] = *v.weak.occlusion;
    vehicles.push_back(std::move(jv));
  }
  return {{"image", rec.image}, {"camera", camera_json(rec.scene.camera)}, {"vehicles", vehicles}};
}

SceneRecord parse_scene(const json& j, std::size_t line) {
  ObjectReader r(j, "scene", line);
  SceneRecord rec;
  rec.image = r.integer<int>("image");
  rec.scene.camera = read_camera(r.at("camera"), "scene.camera", line);
  const json& vs = r.at("vehicles");
  if (!vs.is_array()) r.fail("'vehicles' must be an array");
  for (const auto& jv : vs) {
    ObjectReader rv(jv, "scene.vehicle", line);
    SceneVehicle v;
    if (rv.present("model_id")) v.model_id = rv.string("model_id");
    v.weak.box3d = read_box3d(rv, "box3d");
    if (rv.present("box2d")) v.weak.box2d = read_box(rv, "box2d");
    v.weak.truncation = rv.opt_number("truncation");
    v.weak.occlusion = rv.opt_integer("occlusion");
    rv.finish();
    rec.scene.vehicles.push_back(std::move(v));
  }
  r.finish();
  return rec;
}

}  // namespace

std::string camera_to_json(const CameraIntrinsics& k) { return camera_json(k).dump(2) + "\n"; }

CameraIntrinsics camera_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("camera JSON: ") + e.what());
  }
  return read_camera(j, "camera", 0);
}

CameraIntrinsics load_camera(const std::filesystem::path& path) { return camera_from_json(read_text_file(path)); }

std::string to_json_line(const DetectionRecord& r) { return record_json(r).dump(); }
std::string to_json_line(const GroundTruthRecord& r) { return gt_json(r).dump(); }
std::string to_json_line(const DetectionOutput& r) { return detection_json(r).dump(); }
std::string to_json_line(const SceneRecord& r) { return scene_json(r).dump(); }

std::string write_records(const std::vector<DetectionRecord>& items, const std::optional<FileHeader>& header) {
  return write_lines(items, header, [](const auto& x) { return to_json_line(x); });
}
std::string write_ground_truth(const std::vector<GroundTruthRecord>& items, const std::optional<FileHeader>& header) {
  return write_lines(items, header, [](const auto& x) { return to_json_line(x); });
}
std::string write_detections(const std::vector<DetectionOutput>& items, const std::optional<FileHeader>& header) {
  return write_lines(items, header, [](const auto& x) { return to_json_line(x); });
}
std::string write_scenes(const std::vector<SceneRecord>& items, const std::optional<FileHeader>& header) {
  return write_lines(items, header, [](const auto& x) { return to_json_line(x); });
}

JsonLines<DetectionRecord> read_records(std::string_view text) {
  return read_lines<DetectionRecord>(text, "records", parse_record);
}
JsonLines<GroundTruthRecord> read_ground_truth(std::string_view text) {
  return read_lines<GroundTruthRecord>(text, "ground_truth", parse_gt);
}
JsonLines<DetectionOutput> read_detections(std::string_view text) {
  return read_lines<DetectionOutput>(text, "detections", parse_detection);
}
JsonLines<SceneRecord> read_scenes(std::string_view text) {
  return read_lines<SceneRecord>(text, "scenes", parse_scene);
}

DetectionOutput to_detection_output(const InferenceResult& r) {
  DetectionOutput d;
  d.image = r.record.image;
  d.box = r.record.box;
  d.box3d = r.recovered.box3d;
  d.model_id = r.recovered.model_id;
  d.reproj_rmse = r.recovered.reproj_rmse;
  d.parts2d = r.record.parts2d;
  d.visibility = visibility_argmax(r.record.vis_scores);
  return d;
}

EvalDetection to_eval_detection(const DetectionOutput& d) { return {d.box, d.box3d, d.parts2d, d.visibility}; }

EvalGroundTruth to_eval_ground_truth(const VehicleGT& g) {
  return {g.box, g.box3d, g.parts2d, g.visibility, g.occlusion, g.truncation};
}

std::vector<EvalImage> group_eval_images(const std::vector<DetectionOutput>& dets,
                                         const std::vector<GroundTruthRecord>& gts) {
  int n = 0;
  for (const auto& d : dets) n = std::max(n, d.image + 1);
  for (const auto& g : gts) n = std::max(n, g.image + 1);
  std::vector<EvalImage> images(static_cast<std::size_t>(n));
  for (const auto& d : dets) {
    if (d.image < 0) throw ValidationError("negative image index in detections");
    images[static_cast<std::size_t>(d.image)].dets.push_back(to_eval_detection(d));
  }
  for (const auto& g : gts) {
    if (g.image < 0) throw ValidationError("negative image index in ground truth");
    images[static_cast<std::size_t>(g.image)].gts.push_back(to_eval_ground_truth(g.gt));
  }
  return images;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace partlift
