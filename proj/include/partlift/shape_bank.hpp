#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "partlift/geom.hpp"

namespace partlift {

inline constexpr int kDefaultPartCount = 36;

/// Slot names of the bundled 36-part layout. Only consistent ordering across
/// models matters to the toolkit; the anatomy is a convention of data/.
extern const std::array<std::string_view, 36> kPartNames;

struct MeshFace {
  std::array<int, 3> v{};
  /// 1-based part label in [1, N].
  int part_label = 1;
};

struct VisibilityMesh {
  Points3 vertices;
  std::vector<MeshFace> faces;
};

struct BankModel {
  std::string id;
  /// Canonical, unscaled part positions (3 x N).
  Points3 shape;
  Template3D dims;
  VisibilityMesh mesh;
};

struct ShapeBank {
  int n_parts = kDefaultPartCount;
  std::vector<BankModel> models;
  /// Non-fatal findings from loading (implausible template sizes).
  std::vector<std::string> warnings;

  std::size_t size() const { return models.size(); }
  const BankModel& operator[](std::size_t i) const { return models[i]; }
  /// Throws IndexOutOfRange for unknown ids.
  std::size_t index_of(std::string_view id) const;
};

ShapeBank parse_bank(std::string_view json_text);
ShapeBank load_bank(const std::filesystem::path& path);
/// Canonical JSON text (2-space indent, trailing newline).
std::string serialize_bank(const ShapeBank& bank);
void save_bank(const ShapeBank& bank, const std::filesystem::path& path);

/// Anisotropic rescale, x by dst.l/src.l, y by dst.h/src.h, z by dst.w/src.w.
Points3 scale_shape_to_template(const Points3& shape, const Template3D& src, const Template3D& dst);
VisibilityMesh scale_mesh_to_template(const VisibilityMesh& mesh, const Template3D& src,
                                      const Template3D& dst);

/// Axis-aligned extents of the mesh vertices as (w, h, l).
Template3D model_extents(const VisibilityMesh& mesh);

/// Runs every load-time check; throws ValidationError naming model and field.
void validate_bank(ShapeBank& bank);

}  // namespace partlift
