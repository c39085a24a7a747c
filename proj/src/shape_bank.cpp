#include "partlift/shape_bank.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace partlift {

using nlohmann::json;

const std::array<std::string_view, 36> kPartNames = {
    "wheel_front_left",   "wheel_front_right",  "wheel_rear_left",      "wheel_rear_right",
    "headlight_left",     "headlight_right",    "hood_left",            "hood_right",
    "windshield_left",    "windshield_right",   "roof_left",            "roof_right",
    "rear_window_left",   "rear_window_right",  "trunk_left",           "trunk_right",
    "taillight_left",     "taillight_right",    "underbody_center",     "front_bumper_center",
    "hood_center",        "windshield_center",  "roof_center",          "rear_window_center",
    "trunk_center",       "rear_bumper_center", "front_fender_left",    "front_door_left",
    "rear_door_left",     "rear_fender_left",   "mirror_left",          "front_fender_right",
    "front_door_right",   "rear_door_right",    "rear_fender_right",    "mirror_right",
};

std::size_t ShapeBank::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < models.size(); ++i)
    if (models[i].id == id) return i;
  throw IndexOutOfRange("unknown bank model id '" + std::string(id) + "'");
}

namespace {

Points3 points_from_json(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ParseError(where + ": expected an array of points");
  Points3 out(3, static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& p = arr[i];
    if (!p.is_array() || p.size() != 3) throw ParseError(where + ": point " + std::to_string(i) + " is not [x,y,z]");
    for (int a = 0; a < 3; ++a) {
      if (!p[a].is_number()) throw ParseError(where + ": non-numeric coordinate");
      out(a, static_cast<Eigen::Index>(i)) = p[a].get<double>();
    }
  }
  return out;
}

json points_to_json(const Points3& pts) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < pts.cols(); ++i) arr.push_back({pts(0, i), pts(1, i), pts(2, i)});
  return arr;
}

double number(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key) || !obj[key].is_number())
    throw ParseError(where + ": missing numeric field '" + key + "'");
  return obj[key].get<double>();
}

}  // namespace

ShapeBank parse_bank(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bank JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("n_parts") || !doc["n_parts"].is_number_integer())
    throw ParseError("bank JSON: missing integer 'n_parts'");
  if (!doc.contains("models") || !doc["models"].is_array()) throw ParseError("bank JSON: missing 'models' array");

  ShapeBank bank;
  bank.n_parts = doc["n_parts"].get<int>();
  for (const auto& m : doc["models"]) {
    if (!m.is_object() || !m.contains("id") || !m["id"].is_string()) throw ParseError("bank JSON: model without string 'id'");
    BankModel model;
    model.id = m["id"].get<std::string>();
    const std::string where = "model '" + model.id + "'";
    if (!m.contains("template")) throw ParseError(where + ": missing 'template'");
    model.dims = {number(m["template"], "w", where), number(m["template"], "h", where),
                  number(m["template"], "l", where)};
    if (!m.contains("parts")) throw ParseError(where + ": missing 'parts'");
    model.shape = points_from_json(m["parts"], where + " parts");
    if (!m.contains("mesh") || !m["mesh"].is_object()) throw ParseError(where + ": missing 'mesh'");
    const auto& mesh = m["mesh"];
    if (!mesh.contains("vertices") || !mesh.contains("faces")) throw ParseError(where + ": mesh needs vertices and faces");
    model.mesh.vertices = points_from_json(mesh["vertices"], where + " mesh vertices");
    if (!mesh["faces"].is_array()) throw ParseError(where + ": mesh faces must be an array");
    for (const auto& f : mesh["faces"]) {
      if (!f.is_array() || f.size() != 4) throw ParseError(where + ": face is not [i,j,k,part_label]");
      MeshFace face;
      for (int a = 0; a < 3; ++a) {
        if (!f[a].is_number_integer()) throw ParseError(where + ": face index not an integer");
        face.v[a] = f[a].get<int>();
      }
      if (!f[3].is_number_integer()) throw ParseError(where + ": face part label not an integer");
      face.part_label = f[3].get<int>();
      model.mesh.faces.push_back(face);
    }
    bank.models.push_back(std::move(model));
  }
  validate_bank(bank);
  return bank;
}

void validate_bank(ShapeBank& bank) {
  if (bank.n_parts < 1) throw ValidationError("bank: n_parts must be >= 1");
  if (bank.models.empty()) throw ValidationError("bank: at least one model required");
  bank.warnings.clear();
  std::set<std::string> ids;
  for (const auto& m : bank.models) {
    const std::string where = "model '" + m.id + "'";
    if (!ids.insert(m.id).second) throw ValidationError(where + ": duplicate id");
    if (!(m.dims.w > 0 && m.dims.h > 0 && m.dims.l > 0) || !std::isfinite(m.dims.w + m.dims.h + m.dims.l))
      throw ValidationError(where + ": template dimensions must be positive");
    if (m.dims.w < 1 || m.dims.w > 3 || m.dims.h < 0.5 || m.dims.h > 4 || m.dims.l < 2 || m.dims.l > 8)
      bank.warnings.push_back(where + ": template outside plausible vehicle range");
    if (m.shape.cols() != bank.n_parts)
      throw ValidationError(where + ": parts has " + std::to_string(m.shape.cols()) + " entries, expected " +
                            std::to_string(bank.n_parts));
    if (!m.shape.allFinite()) throw ValidationError(where + ": parts must be finite");

    const auto& mesh = m.mesh;
    if (mesh.vertices.cols() < 3 || mesh.faces.empty()) throw ValidationError(where + ": degenerate mesh");
    if (!mesh.vertices.allFinite()) throw ValidationError(where + ": mesh vertices must be finite");
    for (const auto& f : mesh.faces) {
      for (int idx : f.v)
        if (idx < 0 || idx >= mesh.vertices.cols()) throw ValidationError(where + ": mesh face index out of range");
      if (f.part_label < 1 || f.part_label > bank.n_parts)
        throw ValidationError(where + ": mesh face part label out of range");
    }
    const Vec3 half = m.dims.xyz() * 0.5 * 1.05;
    if ((mesh.vertices.cwiseAbs().colwise() - half).maxCoeff() > 0)
      throw ValidationError(where + ": mesh vertex outside template box (+5%)");
    const Template3D ext = model_extents(mesh);
    const Vec3 rel = (ext.whl() - m.dims.whl()).cwiseAbs().cwiseQuotient(m.dims.whl());
    if (rel.maxCoeff() > 0.05) throw ValidationError(where + ": mesh extents disagree with template by more than 5%");
  }
}

ShapeBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open bank file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_bank(ss.str());
}

std::string serialize_bank(const ShapeBank& bank) {
  json doc;
  doc["n_parts"] = bank.n_parts;
  doc["models"] = json::array();
  for (const auto& m : bank.models) {
    json faces = json::array();
    for (const auto& f : m.mesh.faces) faces.push_back({f.v[0], f.v[1], f.v[2], f.part_label});
    doc["models"].push_back({{"id", m.id},
                             {"template", {{"w", m.dims.w}, {"h", m.dims.h}, {"l", m.dims.l}}},
                             {"parts", points_to_json(m.shape)},
                             {"mesh", {{"vertices", points_to_json(m.mesh.vertices)}, {"faces", faces}}}});
  }
  return doc.dump(2) + "\n";
}

void save_bank(const ShapeBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write bank file " + path.string());
  out << serialize_bank(bank);
}

Points3 scale_shape_to_template(const Points3& shape, const Template3D& src, const Template3D& dst) {
  const Vec3 s = dst.xyz().cwiseQuotient(src.xyz());
  return s.asDiagonal() * shape;
}

VisibilityMesh scale_mesh_to_template(const VisibilityMesh& mesh, const Template3D& src, const Template3D& dst) {
  return {scale_shape_to_template(mesh.vertices, src, dst), mesh.faces};
}

Template3D model_extents(const VisibilityMesh& mesh) {
  const Vec3 ext = mesh.vertices.rowwise().maxCoeff() - mesh.vertices.rowwise().minCoeff();
  return {ext.z(), ext.y(), ext.x()};
}

}  // namespace partlift
