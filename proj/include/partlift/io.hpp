#pragma once

// Line-oriented JSON files: one object per line, optionally preceded by a
// {"header": {...}} line carrying the seed. Readers reject unknown keys.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "partlift/annotator.hpp"
#include "partlift/inference.hpp"
#include "partlift/metrics.hpp"

namespace partlift {

struct FileHeader {
  std::string kind;
  std::optional<std::uint64_t> seed;

  bool operator==(const FileHeader&) const = default;
};

struct GroundTruthRecord {
  int image = 0;
  VehicleGT gt;
};

/// A recovered vehicle as written by inference.
struct DetectionOutput {
  int image = 0;
  ScoredBox box;
  Box3D box3d;
  std::string model_id;
  double reproj_rmse = 0;
  Points2 parts2d;
  VisibilityVector visibility;
};

struct SceneRecord {
  int image = 0;
  Scene scene;
};

template <class T>
struct JsonLines {
  std::optional<FileHeader> header;
  std::vector<T> items;
};

std::string camera_to_json(const CameraIntrinsics& k);
CameraIntrinsics camera_from_json(std::string_view text);
CameraIntrinsics load_camera(const std::filesystem::path& path);

std::string to_json_line(const DetectionRecord& r);
std::string to_json_line(const GroundTruthRecord& r);
std::string to_json_line(const DetectionOutput& r);
/// Vehicles only; meshes are rebuilt from the bank on read.
std::string to_json_line(const SceneRecord& r);

std::string write_records(const std::vector<DetectionRecord>& items, const std::optional<FileHeader>& header = {});
std::string write_ground_truth(const std::vector<GroundTruthRecord>& items,
                               const std::optional<FileHeader>& header = {});
std::string write_detections(const std::vector<DetectionOutput>& items, const std::optional<FileHeader>& header = {});
std::string write_scenes(const std::vector<SceneRecord>& items, const std::optional<FileHeader>& header = {});

JsonLines<DetectionRecord> read_records(std::string_view text);
JsonLines<GroundTruthRecord> read_ground_truth(std::string_view text);
JsonLines<DetectionOutput> read_detections(std::string_view text);
/// Scene meshes are left empty; call place_meshes.
JsonLines<SceneRecord> read_scenes(std::string_view text);

DetectionOutput to_detection_output(const InferenceResult& r);
EvalDetection to_eval_detection(const DetectionOutput& d);
EvalGroundTruth to_eval_ground_truth(const VehicleGT& g);
/// Groups detections and ground truth by image index (0 .. max index).
std::vector<EvalImage> group_eval_images(const std::vector<DetectionOutput>& dets,
                                         const std::vector<GroundTruthRecord>& gts);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace partlift
